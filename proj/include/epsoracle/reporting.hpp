#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <Eigen/Dense>

namespace epsoracle {

using json = nlohmann::json;

// Row-per-line JSON log. Rows must carry no wall-clock data so that reruns of
// the same config and seed produce byte-identical files; timestamps belong in
// the summary documents instead.
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::string& path);
  void write(const json& row);
  std::int64_t rows_written() const { return rows_; }

 private:
  std::ofstream out_;
  std::int64_t rows_ = 0;
};

// CSV with a fixed header; schema changes mean a new header, never a silent
// column shuffle.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);
  void write_row(const std::vector<std::string>& fields);

 private:
  std::ofstream out_;
  std::size_t n_cols_ = 0;
};

// Shortest round-trip decimal form, locale-independent.
std::string format_double(double v);

json vector_to_json(const Eigen::VectorXd& v);

// ISO 8601 UTC wall-clock time; summaries only.
std::string timestamp_utc();

void write_json_file(const std::string& path, const json& doc);
json read_json_file(const std::string& path);

// Creates the directory (and parents) if needed; throws on failure.
void ensure_directory(const std::string& path);

}  // namespace epsoracle
