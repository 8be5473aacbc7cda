#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "maxent/serialization.hpp"

namespace maxent::cli {

std::string sha256_file(const std::filesystem::path& path);

/// Shortest round-trip text for a double; empty for NaN.
std::string fmt_num(double v);

/// Output directory plus the list of files read and written, dumped as
/// manifest.json at the end of a command.
class RunContext
{
  public:
    RunContext(std::filesystem::path out_dir, std::string command, std::uint64_t seed);

    const std::filesystem::path& out_dir() const { return out_dir_; }
    std::uint64_t seed() const { return seed_; }

    void add_input(const std::filesystem::path& p);
    std::filesystem::path output(const std::string& name);

    void write_json(const std::string& name, const Json& j);

    Json& meta() { return meta_; }
    void write_manifest(const std::string& effective_config);

  private:
    std::filesystem::path out_dir_;
    std::string command_;
    std::uint64_t seed_;
    std::vector<std::filesystem::path> inputs_;
    std::vector<std::string> outputs_;
    Json meta_ = Json::object();
};

/// Minimal CSV writer; cells are written as given.
class CsvWriter
{
  public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);

    CsvWriter& operator<<(const std::string& cell);
    CsvWriter& operator<<(double v);
    CsvWriter& operator<<(std::size_t v);
    void end_row();

  private:
    void sep();

    std::ofstream out_;
    bool first_ = true;
};

} // namespace maxent::cli
