#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ckmm/dataset.hpp"
#include "ckmm/mixture.hpp"

namespace ckmm {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Strict full-string double parse; throws parse on trailing garbage or empty input.
double parse_double(const std::string& text);

/// Long-format CSV with header `subject,feature,time,value`, rows ordered by
/// subject, feature, time (0-based indices).
void write_dataset_csv(std::ostream& out, const LongitudinalDataset& data);

/// Accepts rows in any order. Throws parse (bad row, with its line number) or
/// format (duplicate or missing cells, naming the offending line).
LongitudinalDataset read_dataset_csv(std::istream& in, const std::string& source = "<stream>");

struct TsData {
  LongitudinalDataset data;
  /// Contiguous ids in order of first appearance; empty without class labels.
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::string problem_name;
};

/// sktime/UCR `.ts` reader: `@` header tags, then one case per line with
/// colon-separated dimensions and the class after the final colon.
/// Ragged lengths throw unsupported_unbalanced; malformed lines throw parse.
TsData read_ts(std::istream& in, const std::string& source = "<stream>");

/// Dispatches on the extension: `.ts` or long-format CSV.
TsData load_dataset(const std::filesystem::path& path);

void write_labels_csv(std::ostream& out, const std::vector<int>& labels);
std::vector<int> read_labels_csv(std::istream& in, const std::string& source = "<stream>");

void write_responsibilities_csv(std::ostream& out, const Responsibilities& r);
void write_trace_csv(std::ostream& out, const std::vector<double>& trace);

/// Versioned UTF-8 key-value text; numeric arrays are little-endian IEEE
/// doubles in base64, so a round trip is bit exact.
void write_model(std::ostream& out, const CkmmModel& model);
CkmmModel read_model(std::istream& in, const std::string& source = "<stream>");

inline constexpr int kModelFormatVersion = 1;

std::string base64_encode(const std::vector<double>& values);
std::vector<double> base64_decode(const std::string& text);

/// Whole-file helpers; throw io naming the path.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace ckmm
