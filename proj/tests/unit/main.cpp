#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <spdlog/spdlog.h>

int main(int argc, char** argv)
{
    // library warnings about degenerate inputs are expected in several cases
    spdlog::set_level(spdlog::level::err);
    doctest::Context ctx(argc, argv);
    return ctx.run();
}
