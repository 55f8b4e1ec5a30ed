#include "vectorplus/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "vectorplus/chem.hpp"
#include "vectorplus/errors.hpp"
#include "vectorplus/log.hpp"

namespace vectorplus::data {

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (const auto& r : records) ++counts[static_cast<std::size_t>(r.label - 1)];
  return counts;
}

std::vector<std::string> LabeledDataset::smiles() const {
  std::vector<std::string> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.smiles);
  return out;
}

std::vector<int> LabeledDataset::labels() const {
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.label);
  return out;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        any = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        any = true;
        break;
      case '\r':
        break;
      case '\n':
        if (any || !field.empty()) {
          row.push_back(std::move(field));
          rows.push_back(std::move(row));
        }
        row.clear();
        field.clear();
        any = false;
        break;
      default:
        field += c;
        any = true;
    }
  }
  if (quoted) throw SchemaError(path + ": unterminated quoted field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw SchemaError(path + ": missing header row");
  return rows;
}

namespace {

std::size_t column_index(const std::vector<std::string>& header, const std::string& name,
                         const std::string& path) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw SchemaError(path + ": missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

double mean_of(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

}  // namespace

ActivityTable load_activity_csv(const std::string& path, const std::string& smiles_col,
                                const std::string& value_col) {
  const auto rows = read_csv(path);
  const std::size_t s = column_index(rows[0], smiles_col, path);
  const std::size_t v = column_index(rows[0], value_col, path);
  ActivityTable table;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    ++table.provenance.raw_count;
    if (row.size() <= std::max(s, v)) {
      throw SchemaError(path + ":" + std::to_string(i + 1) + ": too few fields");
    }
    const std::string smiles = trim(row[s]);
    double value = 0.0;
    try {
      std::size_t used = 0;
      value = std::stod(trim(row[v]), &used);
    } catch (const std::exception&) {
      throw SchemaError(path + ":" + std::to_string(i + 1) + ": non-numeric value '" + row[v] +
                        "'");
    }
    if (!chem::is_valid(smiles)) {
      ++table.provenance.removed_invalid;
      log::debug("dropping unparseable SMILES '" + smiles + "' at line " + std::to_string(i + 1));
      continue;
    }
    table.rows.push_back({smiles, value, 0.0});
  }
  return table;
}

LabelTable load_label_csv(const std::string& path, const std::string& smiles_col,
                          const std::string& label_col) {
  const auto rows = read_csv(path);
  const std::size_t s = column_index(rows[0], smiles_col, path);
  const std::size_t l = column_index(rows[0], label_col, path);
  LabelTable table;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    ++table.provenance.raw_count;
    if (row.size() <= std::max(s, l)) {
      throw SchemaError(path + ":" + std::to_string(i + 1) + ": too few fields");
    }
    const std::string smiles = trim(row[s]);
    if (!chem::is_valid(smiles)) {
      ++table.provenance.removed_invalid;
      continue;
    }
    table.rows.push_back({smiles, trim(row[l])});
  }
  return table;
}

std::variant<ActivityTable, LabelTable> load_csv(const std::string& path,
                                                 const CsvSchema& schema) {
  if (!schema.value_col.empty() && !schema.label_col.empty()) {
    throw SchemaError("set only one of value column and label column");
  }
  if (!schema.value_col.empty()) {
    return load_activity_csv(path, schema.smiles_col, schema.value_col);
  }
  if (!schema.label_col.empty()) return load_label_csv(path, schema.smiles_col, schema.label_col);
  throw SchemaError("either a value column or a label column is required");
}

ActivityTable zscore_filter(const ActivityTable& table, double threshold, FilterScale scale) {
  if (table.rows.size() < 2) throw DegenerateData("z-score filter needs at least 2 rows");
  if (!(threshold > 0.0)) throw ConfigError("z-score threshold must be positive");
  std::vector<double> values;
  values.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    if (scale == FilterScale::kLog) {
      if (!(row.ic50 > 0.0)) throw NonPositiveValue("IC50 " + std::to_string(row.ic50));
      values.push_back(std::log(row.ic50));
    } else {
      values.push_back(row.ic50);
    }
  }
  const double mean = mean_of(values);
  double var = 0.0;
  for (double x : values) var += (x - mean) * (x - mean);
  var /= static_cast<double>(values.size());
  const double sd = std::sqrt(var);
  if (sd == 0.0) throw DegenerateData("zero standard deviation");

  ActivityTable out;
  out.log_transformed = table.log_transformed;
  out.provenance = table.provenance;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (std::abs((values[i] - mean) / sd) > threshold) {
      ++out.provenance.removed_outliers;
      continue;
    }
    out.rows.push_back(table.rows[i]);
  }
  return out;
}

ActivityTable log_transform(const ActivityTable& table) {
  ActivityTable out = table;
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    if (!(out.rows[i].ic50 > 0.0)) {
      throw NonPositiveValue("row " + std::to_string(i) + " has IC50 " +
                             std::to_string(out.rows[i].ic50));
    }
    out.rows[i].log_ic50 = std::log(out.rows[i].ic50);
  }
  out.log_transformed = true;
  out.provenance.transform = "log";
  return out;
}

double lower_median(std::vector<double> values) {
  if (values.empty()) throw DegenerateData("median of empty set");
  std::sort(values.begin(), values.end());
  return values[(values.size() - 1) / 2];
}

namespace {

void drop_duplicates(LabeledDataset& dataset) {
  std::set<std::pair<int, std::string>> seen;
  std::vector<Record> kept;
  for (auto& record : dataset.records) {
    const auto canon = chem::canonical_smiles(record.smiles).value_or(record.smiles);
    if (!seen.emplace(record.label, canon).second) {
      ++dataset.provenance.removed_duplicates;
      log::info("duplicate within class " + std::to_string(record.label) + ": " + record.smiles);
      continue;
    }
    kept.push_back(std::move(record));
  }
  dataset.records = std::move(kept);
}

}  // namespace

LabeledDataset median_bin(const ActivityTable& table, bool dedup) {
  if (table.rows.size() < 2) throw DegenerateData("median binning needs at least 2 rows");
  if (!table.log_transformed) throw ConfigError("median binning expects a log-transformed table");
  std::vector<double> values;
  for (const auto& row : table.rows) values.push_back(row.log_ic50);
  const double median = lower_median(values);

  LabeledDataset dataset;
  dataset.num_classes = 2;
  dataset.class_names = {"high activity", "low activity"};
  dataset.provenance = table.provenance;
  for (const auto& row : table.rows) {
    dataset.records.push_back({row.smiles, row.log_ic50 <= median ? 1 : 2});
  }
  if (dedup) drop_duplicates(dataset);
  return dataset;
}

std::vector<std::string> distinct_labels(const LabelTable& table) {
  std::vector<std::string> names;
  for (const auto& row : table.rows) {
    if (std::find(names.begin(), names.end(), row.label) == names.end()) names.push_back(row.label);
  }
  return names;
}

LabeledDataset from_class_labels(const LabelTable& table,
                                 const std::vector<std::string>& class_names, bool dedup) {
  std::vector<std::string> names;
  for (const auto& n : class_names) {
    if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
  }
  if (names.size() < 2) {
    throw InvalidClassCount("need at least 2 classes, got " + std::to_string(names.size()));
  }
  LabeledDataset dataset;
  dataset.num_classes = static_cast<int>(names.size());
  dataset.class_names = names;
  dataset.provenance = table.provenance;
  for (const auto& row : table.rows) {
    const auto it = std::find(names.begin(), names.end(), row.label);
    if (it == names.end()) throw UnknownLabel("unknown class label '" + row.label + "'");
    dataset.records.push_back({row.smiles, static_cast<int>(it - names.begin()) + 1});
  }
  if (dedup) drop_duplicates(dataset);
  return dataset;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_dataset(const LabeledDataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "smiles,label,class_name\n";
  for (const auto& r : dataset.records) {
    out << csv_field(r.smiles) << ',' << r.label << ','
        << csv_field(dataset.class_names[static_cast<std::size_t>(r.label - 1)]) << '\n';
  }
}

LabeledDataset read_dataset(const std::string& path) {
  const auto rows = read_csv(path);
  const std::size_t s = column_index(rows[0], "smiles", path);
  const std::size_t l = column_index(rows[0], "label", path);
  const std::size_t n = column_index(rows[0], "class_name", path);
  LabeledDataset dataset;
  std::map<int, std::string> names;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() <= std::max({s, l, n})) {
      throw SchemaError(path + ":" + std::to_string(i + 1) + ": too few fields");
    }
    int label = 0;
    try {
      label = std::stoi(row[l]);
    } catch (const std::exception&) {
      throw SchemaError(path + ":" + std::to_string(i + 1) + ": bad label '" + row[l] + "'");
    }
    if (label < 1) throw SchemaError(path + ":" + std::to_string(i + 1) + ": label must be >= 1");
    if (!chem::is_valid(row[s])) {
      throw SchemaError(path + ":" + std::to_string(i + 1) + ": invalid SMILES '" + row[s] + "'");
    }
    dataset.records.push_back({row[s], label});
    names[label] = row[n];
  }
  dataset.num_classes = names.empty() ? 0 : names.rbegin()->first;
  for (int c = 1; c <= dataset.num_classes; ++c) {
    dataset.class_names.push_back(names.count(c) ? names[c] : "class " + std::to_string(c));
  }
  if (dataset.num_classes < 2) {
    throw InvalidClassCount(path + ": need at least 2 classes");
  }
  dataset.provenance.raw_count = dataset.records.size();
  return dataset;
}

nlohmann::json to_json(const Provenance& p) {
  return {{"raw_count", p.raw_count},
          {"removed_invalid", p.removed_invalid},
          {"removed_outliers", p.removed_outliers},
          {"removed_duplicates", p.removed_duplicates},
          {"transform", p.transform}};
}

nlohmann::json summary_json(const LabeledDataset& dataset) {
  nlohmann::json classes = nlohmann::json::array();
  const auto counts = dataset.class_counts();
  for (int c = 1; c <= dataset.num_classes; ++c) {
    classes.push_back({{"label", c},
                       {"name", dataset.class_names[static_cast<std::size_t>(c - 1)]},
                       {"count", counts[static_cast<std::size_t>(c - 1)]}});
  }
  return {{"records", dataset.records.size()},
          {"num_classes", dataset.num_classes},
          {"classes", classes},
          {"provenance", to_json(dataset.provenance)}};
}

}  // namespace vectorplus::data
