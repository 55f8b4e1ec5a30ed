#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace vectorplus::testing {

inline std::string data_path(const std::string& relative) {
  return std::string(VECTORPLUS_DATA_DIR) + "/" + relative;
}

// Non-empty lines of a text file, trailing newline stripped.
inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace vectorplus::testing
