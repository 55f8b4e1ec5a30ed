#pragma once

// Dataset ingestion and activity preprocessing: outlier removal, log IC50,
// median binning and categorical class labels.

#include <cstddef>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace vectorplus::data {

struct Provenance {
  std::size_t raw_count = 0;
  std::size_t removed_invalid = 0;
  std::size_t removed_outliers = 0;
  std::size_t removed_duplicates = 0;
  std::string transform = "none";  // none | log
};

struct ActivityRow {
  std::string smiles;
  double ic50 = 0.0;      // nM
  double log_ic50 = 0.0;  // valid once the table is log transformed
};

struct ActivityTable {
  std::vector<ActivityRow> rows;
  bool log_transformed = false;
  Provenance provenance;
};

struct LabelRow {
  std::string smiles;
  std::string label;
};

struct LabelTable {
  std::vector<LabelRow> rows;
  Provenance provenance;
};

struct Record {
  std::string smiles;
  int label = 1;  // 1..num_classes
};

struct LabeledDataset {
  std::vector<Record> records;
  int num_classes = 0;
  std::vector<std::string> class_names;  // index c-1 names class c
  Provenance provenance;

  std::vector<std::size_t> class_counts() const;
  std::vector<std::string> smiles() const;
  std::vector<int> labels() const;
};

struct CsvSchema {
  std::string smiles_col = "smiles";
  std::string value_col;  // set for activity tables
  std::string label_col;  // set for labelled tables
};

// Quotes a field when it contains a comma, quote or newline.
std::string csv_field(const std::string& s);
// Shortest-safe decimal text (17 significant digits).
std::string format_double(double v);

// Comma-separated reader with RFC 4180 quoting. First row is the header.
std::vector<std::vector<std::string>> read_csv(const std::string& path);

ActivityTable load_activity_csv(const std::string& path, const std::string& smiles_col,
                                const std::string& value_col);
LabelTable load_label_csv(const std::string& path, const std::string& smiles_col,
                          const std::string& label_col);
// Dispatches on whichever of value_col / label_col is set.
std::variant<ActivityTable, LabelTable> load_csv(const std::string& path, const CsvSchema& schema);

enum class FilterScale { kLog, kRaw };

// Removes rows whose |z| exceeds `threshold`. Mean and population standard
// deviation are computed once on the input.
ActivityTable zscore_filter(const ActivityTable& table, double threshold,
                            FilterScale scale = FilterScale::kLog);

ActivityTable log_transform(const ActivityTable& table);

// Lower middle value for even counts; rows <= median are class 1.
double lower_median(std::vector<double> values);
LabeledDataset median_bin(const ActivityTable& table, bool dedup = true);

LabeledDataset from_class_labels(const LabelTable& table,
                                 const std::vector<std::string>& class_names, bool dedup = true);

// Class names in order of first appearance.
std::vector<std::string> distinct_labels(const LabelTable& table);

// Processed dataset as CSV: smiles,label,class_name.
void write_dataset(const LabeledDataset& dataset, const std::string& path);
LabeledDataset read_dataset(const std::string& path);

nlohmann::json to_json(const Provenance& provenance);
nlohmann::json summary_json(const LabeledDataset& dataset);

}  // namespace vectorplus::data
