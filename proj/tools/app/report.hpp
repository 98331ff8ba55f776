#pragma once

#include <string>
#include <utility>
#include <vector>

#include "selfaffine/types.hpp"

namespace selfaffine::cli {

/// Shortest round-trip decimal; "nan", "inf", "-inf" for non-finite values.
std::string num(double v);
std::string num(const Vec& v, const char* sep = " ");

/// CSV with a leading "# <kind> config_hash=<hash>" comment and a header row.
class CsvTable {
  public:
    CsvTable(std::string kind, std::string hash, std::vector<std::string> header);
    void row(const std::vector<std::string>& cells);
    std::size_t rows() const { return rows_; }
    const std::string& text() const { return text_; }

  private:
    std::size_t columns_;
    std::size_t rows_ = 0;
    std::string text_;
};

/// Key-value report: a comment line, a [report] section, then the resolved
/// configuration, so the whole file parses as INI.
class Summary {
  public:
    Summary(std::string kind, std::string hash);
    void add(const std::string& key, const std::string& value);
    void add(const std::string& key, double value) { add(key, num(value)); }
    void add(const std::string& key, int value) { add(key, std::to_string(value)); }
    void add(const std::string& key, std::size_t value) { add(key, std::to_string(value)); }
    void add(const std::string& key, const char* value) { add(key, std::string(value)); }
    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
    std::string text(const std::string& resolved_config) const;

  private:
    std::string kind_, hash_;
    std::vector<std::pair<std::string, std::string>> entries_;
};

/// Writes bytes verbatim, creating parent directories.
void write_file(const std::string& path, const std::string& content);

}  // namespace selfaffine::cli
