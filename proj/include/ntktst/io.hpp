#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace ntktst {

// Minimal comma-separated writer with LF line endings and a mandatory header.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, std::vector<std::string> header);

    void row(std::initializer_list<double> values);
    void row(std::span<const double> values);
    void raw_row(const std::vector<std::string>& cells);

private:
    std::ofstream out_;
    std::size_t columns_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

std::string format_double(double v);

// Writes j (with format_version added) as pretty JSON.
void write_json(const std::filesystem::path& path, nlohmann::json j);
// Reads JSON and rejects a missing or mismatched format_version.
nlohmann::json read_versioned_json(const std::filesystem::path& path);
void check_format_version(const nlohmann::json& j, const std::string& what);

void write_f64_le(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f64_le(const std::filesystem::path& path);

}  // namespace ntktst
