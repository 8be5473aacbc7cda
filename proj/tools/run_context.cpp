#include "run_context.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "maxent/error.hpp"

namespace maxent::cli {

namespace fs = std::filesystem;

std::string sha256_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot read file: " + path.string());

    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    std::array<char, 1 << 16> buf;
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0)
            EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);

    std::string hex;
    for (unsigned i = 0; i < len; ++i)
        hex += fmt::format("{:02x}", md[i]);
    return hex;
}

std::string fmt_num(double v)
{
    if (std::isnan(v))
        return "";
    return fmt::format("{}", v);
}

RunContext::RunContext(fs::path out_dir, std::string command, std::uint64_t seed)
    : out_dir_(std::move(out_dir)), command_(std::move(command)), seed_(seed)
{
    std::error_code ec;
    fs::create_directories(out_dir_, ec);
    if (ec)
        throw Error("cannot create output directory " + out_dir_.string() + ": " + ec.message());
}

void RunContext::add_input(const fs::path& p)
{
    inputs_.push_back(p);
}

fs::path RunContext::output(const std::string& name)
{
    if (std::find(outputs_.begin(), outputs_.end(), name) == outputs_.end())
        outputs_.push_back(name);
    return out_dir_ / name;
}

void RunContext::write_json(const std::string& name, const Json& j)
{
    save_json(j, output(name));
}

void RunContext::write_manifest(const std::string& effective_config)
{
    Json m;
    m["command"] = command_;
    m["seed"] = seed_;
    m["config"] = effective_config;
    m["meta"] = meta_;

    Json in = Json::array();
    for (const auto& p : inputs_)
        in.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
    m["inputs"] = in;

    // outputs listed relative to the output directory so that identical runs
    // into different directories still agree
    Json out = Json::array();
    for (const auto& name : outputs_) {
        fs::path p = out_dir_ / name;
        out.push_back({{"path", name},
                       {"bytes", fs::file_size(p)},
                       {"sha256", sha256_file(p)}});
    }
    m["outputs"] = out;
    save_json(m, out_dir_ / "manifest.json");
}

CsvWriter::CsvWriter(const fs::path& path, const std::vector<std::string>& header)
    : out_(path)
{
    if (!out_)
        throw Error("cannot write file: " + path.string());
    for (const auto& h : header)
        *this << h;
    end_row();
}

void CsvWriter::sep()
{
    if (!first_)
        out_ << ',';
    first_ = false;
}

CsvWriter& CsvWriter::operator<<(const std::string& cell)
{
    sep();
    if (cell.find_first_of(",\"\n") != std::string::npos) {
        out_ << '"';
        for (char c : cell)
            out_ << (c == '"' ? "\"\"" : std::string(1, c));
        out_ << '"';
    } else {
        out_ << cell;
    }
    return *this;
}

CsvWriter& CsvWriter::operator<<(double v)
{
    sep();
    out_ << fmt_num(v);
    return *this;
}

CsvWriter& CsvWriter::operator<<(std::size_t v)
{
    sep();
    out_ << v;
    return *this;
}

void CsvWriter::end_row()
{
    out_ << '\n';
    first_ = true;
}

} // namespace maxent::cli
