#include "app/report.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <fmt/format.h>

namespace selfaffine::cli {

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return fmt::format("{}", v == 0.0 ? 0.0 : v);
}

std::string num(const Vec& v, const char* sep) {
    std::string s;
    for (int i = 0; i < v.size(); ++i) s += (i ? sep : "") + num(v[i]);
    return s;
}

CsvTable::CsvTable(std::string kind, std::string hash, std::vector<std::string> header) : columns_(header.size()) {
    text_ = fmt::format("# {} config_hash={}\n", kind, hash);
    for (std::size_t i = 0; i < header.size(); ++i) text_ += (i ? "," : "") + header[i];
    text_ += "\n";
}

void CsvTable::row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw Error(ErrorCode::Io, "csv row width mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i) text_ += (i ? "," : "") + cells[i];
    text_ += "\n";
    ++rows_;
}

Summary::Summary(std::string kind, std::string hash) : kind_(std::move(kind)), hash_(std::move(hash)) {
    add("config_hash", hash_);
}

void Summary::add(const std::string& key, const std::string& value) { entries_.emplace_back(key, value); }

std::string Summary::text(const std::string& resolved_config) const {
    std::string s = fmt::format("# {} config_hash={}\n[report]\n", kind_, hash_);
    for (const auto& [k, v] : entries_) s += k + " = " + v + "\n";
    return s + resolved_config;
}

void write_file(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorCode::Io, fmt::format("cannot write {}", path));
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!os) throw Error(ErrorCode::Io, fmt::format("failed writing {}", path));
}

}  // namespace selfaffine::cli
