#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "vectorplus/chem.hpp"
#include "vectorplus/errors.hpp"

namespace vectorplus::chem {

namespace {

// Keep in sync with data/logp_contributions.txt.
constexpr std::string_view kBuiltinLogP = R"(# vectorplus logP atom contributions
# version: logp-table-v1
C.sp3    0.1441
C.sp3x  -0.2035
C.sp2    0.1360
C.sp2x  -0.1002
C.ar     0.1581
C.arx    0.1360
N.amine -1.0190
N.sp2   -0.3187
N.ar    -0.4806
N.plus  -0.3396
O.oh    -0.2893
O.ether -0.0684
O.co    -0.1526
O.ar     0.1552
O.minus -1.3260
S        0.6237
P        0.8612
B        0.0000
F        0.4202
Cl       0.6895
Br       0.8456
I        0.8857
H.C      0.1230
H.N      0.2142
H.O     -0.2677
H.other  0.1230
)";

bool is_hetero(const std::string& element) { return element != "C" && element != "H"; }

}  // namespace

double atomic_mass(std::string_view element) {
  static const std::map<std::string_view, double> kMass = {
      {"H", 1.008},    {"Li", 6.94},    {"B", 10.81},    {"C", 12.011},   {"N", 14.007},
      {"O", 15.999},   {"F", 18.998},   {"Na", 22.990},  {"Mg", 24.305},  {"Al", 26.982},
      {"Si", 28.085},  {"P", 30.974},   {"S", 32.06},    {"Cl", 35.45},   {"K", 39.098},
      {"Ca", 40.078},  {"Fe", 55.845},  {"Cu", 63.546},  {"Zn", 65.38},   {"As", 74.922},
      {"Se", 78.971},  {"Br", 79.904},  {"Sn", 118.71},  {"I", 126.904},  {"Pt", 195.08}};
  const auto it = kMass.find(element);
  if (it == kMass.end()) throw UnsupportedElement("no atomic mass for " + std::string(element));
  return it->second;
}

LogPTable LogPTable::from_text(std::string_view text) {
  LogPTable table;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (const auto pos = line.find("version:"); pos != std::string::npos && line[0] == '#') {
      std::istringstream v(line.substr(pos + 8));
      v >> table.version_;
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string type;
    double value = 0.0;
    if (!(fields >> type)) continue;
    if (!(fields >> value)) {
      throw ConfigError("logP table line " + std::to_string(line_number) + ": missing value");
    }
    table.entries_.emplace_back(type, value);
  }
  return table;
}

LogPTable LogPTable::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open logP table " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_text(buffer.str());
}

const LogPTable& LogPTable::builtin() {
  static const LogPTable table = from_text(kBuiltinLogP);
  return table;
}

bool LogPTable::has(const std::string& type) const {
  for (const auto& [key, value] : entries_) {
    if (key == type) return true;
  }
  return false;
}

double LogPTable::contribution(const std::string& type) const {
  for (const auto& [key, value] : entries_) {
    if (key == type) return value;
  }
  throw UnsupportedElement("no logP contribution for atom type " + type);
}

std::string logp_atom_type(const Molecule& mol, int index) {
  const Atom& atom = mol.atoms()[index];
  bool multiple = false;
  bool multiple_to_hetero = false;
  bool hetero_neighbour = false;
  for (int bond : mol.incident(index)) {
    const BondOrder order = mol.bonds()[bond].order;
    const std::string& nbr = mol.atoms()[mol.other(bond, index)].element;
    if (is_hetero(nbr)) hetero_neighbour = true;
    if (order == BondOrder::kDouble || order == BondOrder::kTriple) {
      multiple = true;
      if (is_hetero(nbr)) multiple_to_hetero = true;
    }
  }
  const std::string& e = atom.element;
  if (e == "C") {
    if (atom.aromatic) return hetero_neighbour ? "C.arx" : "C.ar";
    if (multiple) return multiple_to_hetero ? "C.sp2x" : "C.sp2";
    return hetero_neighbour ? "C.sp3x" : "C.sp3";
  }
  if (e == "N") {
    if (atom.formal_charge > 0) return "N.plus";
    if (atom.aromatic) return "N.ar";
    return multiple ? "N.sp2" : "N.amine";
  }
  if (e == "O") {
    if (atom.formal_charge < 0) return "O.minus";
    if (atom.aromatic) return "O.ar";
    if (multiple) return "O.co";
    return atom.total_h() > 0 ? "O.oh" : "O.ether";
  }
  return e;
}

// Sums go through per-type counts so the result does not depend on atom order.
double logp(const Molecule& mol, const LogPTable& table) {
  std::map<std::string, int> counts;
  for (int i = 0; i < static_cast<int>(mol.atom_count()); ++i) {
    const Atom& atom = mol.atoms()[i];
    ++counts[logp_atom_type(mol, i)];
    if (atom.total_h() > 0) {
      std::string h_type = "H.other";
      if (atom.element == "C") h_type = "H.C";
      if (atom.element == "N") h_type = "H.N";
      if (atom.element == "O") h_type = "H.O";
      counts[h_type] += atom.total_h();
    }
  }
  double total = 0.0;
  for (const auto& [type, n] : counts) total += n * table.contribution(type);
  return total;
}

Properties properties(const Molecule& mol, const LogPTable& table) {
  Properties props;
  std::map<std::string, int> counts;
  for (const Atom& atom : mol.atoms()) {
    ++counts[atom.element];
    counts["H"] += atom.total_h();
    if (atom.element == "N" || atom.element == "O") {
      ++props.hba;
      if (atom.total_h() > 0) ++props.hbd;
    }
  }
  for (const auto& [element, n] : counts) props.mw += n * atomic_mass(element);
  props.logp = logp(mol, table);
  return props;
}

}  // namespace vectorplus::chem
