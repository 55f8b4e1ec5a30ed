#include <algorithm>
#include <array>
#include <cctype>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>

#include "vectorplus/chem.hpp"
#include "vectorplus/errors.hpp"

namespace vectorplus::chem {

namespace {

constexpr std::array<std::string_view, 118> kElements = {
    "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si", "P",
    "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh",
    "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd",
    "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",  "Re",
    "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th",
    "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db",
    "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

bool is_element(std::string_view symbol) {
  return std::find(kElements.begin(), kElements.end(), symbol) != kElements.end();
}

constexpr int kMaxCharge = 4;

// Bracket atom body: isotope? symbol chirality? hcount? charge? class?
Token lex_bracket(std::string_view text, std::size_t start, std::size_t& pos) {
  Token token{};
  token.kind = TokenKind::kBracketAtom;
  ++pos;  // '['
  auto peek = [&]() -> char { return pos < text.size() ? text[pos] : '\0'; };

  while (std::isdigit(static_cast<unsigned char>(peek()))) ++pos;  // isotope, ignored

  const char first = peek();
  if (first == '\0') throw LexError(pos, "unterminated bracket atom");
  if (std::islower(static_cast<unsigned char>(first))) {
    // Aromatic symbols allowed inside brackets.
    static constexpr std::array<std::string_view, 8> kAromatic = {"se", "as", "b", "c",
                                                                  "n",  "o",  "p", "s"};
    bool matched = false;
    for (auto sym : kAromatic) {
      if (text.substr(pos, sym.size()) == sym) {
        std::string upper(sym);
        upper[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(upper[0])));
        token.element = upper;
        token.aromatic = true;
        pos += sym.size();
        matched = true;
        break;
      }
    }
    if (!matched) throw LexError(pos, first);
  } else if (std::isupper(static_cast<unsigned char>(first))) {
    if (pos + 1 < text.size() && std::islower(static_cast<unsigned char>(text[pos + 1])) &&
        is_element(text.substr(pos, 2))) {
      token.element = std::string(text.substr(pos, 2));
      pos += 2;
    } else if (is_element(text.substr(pos, 1))) {
      token.element = std::string(text.substr(pos, 1));
      pos += 1;
    } else {
      throw LexError(pos, first);
    }
  } else {
    throw LexError(pos, first);
  }

  // Chirality: @, @@, @TH1, @OH12 ... accepted and discarded.
  if (peek() == '@') {
    ++pos;
    if (peek() == '@') {
      ++pos;
    } else {
      while (std::isupper(static_cast<unsigned char>(peek()))) ++pos;
      while (std::isdigit(static_cast<unsigned char>(peek()))) ++pos;
    }
  }

  if (peek() == 'H') {
    ++pos;
    token.hydrogens = 1;
    if (std::isdigit(static_cast<unsigned char>(peek()))) {
      token.hydrogens = peek() - '0';
      ++pos;
    }
  }

  if (peek() == '+' || peek() == '-') {
    const char sign = peek();
    const std::size_t charge_pos = pos;
    int magnitude = 1;
    ++pos;
    if (std::isdigit(static_cast<unsigned char>(peek()))) {
      magnitude = 0;
      while (std::isdigit(static_cast<unsigned char>(peek()))) {
        magnitude = magnitude * 10 + (peek() - '0');
        ++pos;
        if (magnitude > 99) break;
      }
    } else {
      while (peek() == sign) {
        ++magnitude;
        ++pos;
      }
    }
    if (magnitude > kMaxCharge) throw LexError(charge_pos, "charge out of range");
    token.charge = sign == '+' ? magnitude : -magnitude;
  }

  if (peek() == ':') {  // atom class, ignored
    ++pos;
    if (!std::isdigit(static_cast<unsigned char>(peek()))) throw LexError(pos, peek());
    while (std::isdigit(static_cast<unsigned char>(peek()))) ++pos;
  }

  if (peek() != ']') {
    if (peek() == '\0') throw LexError(pos, "unterminated bracket atom");
    throw LexError(pos, peek());
  }
  ++pos;
  token.lexeme = std::string(text.substr(start, pos - start));
  return token;
}

}  // namespace

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t start = pos;
    const char c = text[pos];
    Token token{};
    switch (c) {
      case 'B':
      case 'C': {
        token.kind = TokenKind::kOrganicAtom;
        const char next = pos + 1 < text.size() ? text[pos + 1] : '\0';
        if (c == 'B' && next == 'r') {
          token.element = "Br";
          pos += 2;
        } else if (c == 'C' && next == 'l') {
          token.element = "Cl";
          pos += 2;
        } else {
          token.element = std::string(1, c);
          pos += 1;
        }
        break;
      }
      case 'N':
      case 'O':
      case 'P':
      case 'S':
      case 'F':
      case 'I':
        token.kind = TokenKind::kOrganicAtom;
        token.element = std::string(1, c);
        pos += 1;
        break;
      case 'b':
      case 'c':
      case 'n':
      case 'o':
      case 'p':
      case 's':
        token.kind = TokenKind::kOrganicAtom;
        token.element = std::string(1, static_cast<char>(std::toupper(c)));
        token.aromatic = true;
        pos += 1;
        break;
      case '[':
        token = lex_bracket(text, start, pos);
        break;
      case '-':
      case '/':
      case '\\':
        token.kind = TokenKind::kBond;
        token.order = BondOrder::kSingle;
        pos += 1;
        break;
      case '=':
        token.kind = TokenKind::kBond;
        token.order = BondOrder::kDouble;
        pos += 1;
        break;
      case '#':
        token.kind = TokenKind::kBond;
        token.order = BondOrder::kTriple;
        pos += 1;
        break;
      case ':':
        token.kind = TokenKind::kBond;
        token.order = BondOrder::kAromatic;
        pos += 1;
        break;
      case '(':
        token.kind = TokenKind::kBranchOpen;
        pos += 1;
        break;
      case ')':
        token.kind = TokenKind::kBranchClose;
        pos += 1;
        break;
      case '.':
        token.kind = TokenKind::kDot;
        pos += 1;
        break;
      case '%': {
        if (pos + 2 >= text.size() || !std::isdigit(static_cast<unsigned char>(text[pos + 1])) ||
            !std::isdigit(static_cast<unsigned char>(text[pos + 2]))) {
          throw LexError(pos, "'%' must be followed by two digits");
        }
        token.kind = TokenKind::kRingClosure;
        token.ring_number = (text[pos + 1] - '0') * 10 + (text[pos + 2] - '0');
        pos += 3;
        break;
      }
      default:
        if (std::isdigit(static_cast<unsigned char>(c))) {
          token.kind = TokenKind::kRingClosure;
          token.ring_number = c - '0';
          pos += 1;
          break;
        }
        throw LexError(pos, c);
    }
    if (token.lexeme.empty()) token.lexeme = std::string(text.substr(start, pos - start));
    tokens.push_back(std::move(token));
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// Molecule

int Molecule::add_atom(Atom atom) {
  atoms_.push_back(std::move(atom));
  incident_.emplace_back();
  return static_cast<int>(atoms_.size()) - 1;
}

int Molecule::bond_between(int a, int b) const {
  for (int bond : incident_[a]) {
    if (other(bond, a) == b) return bond;
  }
  return -1;
}

bool Molecule::add_bond(int a, int b, BondOrder order) {
  if (a == b || bond_between(a, b) >= 0) return false;
  bonds_.push_back(Bond{a, b, order});
  const int index = static_cast<int>(bonds_.size()) - 1;
  incident_[a].push_back(index);
  incident_[b].push_back(index);
  return true;
}

void Molecule::finalize() {
  // A bond is a ring bond iff it is not a bridge (Tarjan low-link).
  const int n = static_cast<int>(atoms_.size());
  ring_bond_.assign(bonds_.size(), true);
  std::vector<int> disc(n, -1), low(n, 0);
  int timer = 0;
  // Iterative DFS: (atom, parent bond, next incident index).
  struct Frame {
    int atom;
    int parent_bond;
    std::size_t next;
  };
  for (int root = 0; root < n; ++root) {
    if (disc[root] >= 0) continue;
    std::vector<Frame> stack{{root, -1, 0}};
    disc[root] = low[root] = timer++;
    while (!stack.empty()) {
      Frame& frame = stack.back();
      if (frame.next < incident_[frame.atom].size()) {
        const int bond = incident_[frame.atom][frame.next++];
        if (bond == frame.parent_bond) continue;
        const int nbr = other(bond, frame.atom);
        if (disc[nbr] < 0) {
          disc[nbr] = low[nbr] = timer++;
          stack.push_back({nbr, bond, 0});
        } else {
          low[frame.atom] = std::min(low[frame.atom], disc[nbr]);
        }
      } else {
        const Frame done = frame;
        stack.pop_back();
        if (!stack.empty()) {
          const int parent = stack.back().atom;
          low[parent] = std::min(low[parent], low[done.atom]);
          if (low[done.atom] > disc[parent]) ring_bond_[done.parent_bond] = false;
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Valence rules

namespace {

// Isoelectronic rows: a charge shifts the element along its row.
struct ValenceRow {
  std::array<std::string_view, 6> symbols;
  std::array<std::vector<int>, 6> valences;
};

const std::array<ValenceRow, 4>& valence_rows() {
  static const std::array<ValenceRow, 4> rows = {{
      {{"B", "C", "N", "O", "F", "Ne"}, {{{3}, {4}, {3}, {2}, {1}, {0}}}},
      {{"Al", "Si", "P", "S", "Cl", "Ar"}, {{{3}, {4}, {3, 5}, {2, 4, 6}, {1}, {0}}}},
      {{"Ga", "Ge", "As", "Se", "Br", "Kr"}, {{{3}, {4}, {3, 5}, {2, 4, 6}, {1}, {0}}}},
      {{"In", "Sn", "Sb", "Te", "I", "Xe"}, {{{3}, {4}, {3, 5}, {2, 4, 6}, {1}, {0}}}},
  }};
  return rows;
}

// Allowed valences for an element at a formal charge; nullopt when the element
// has no valence constraint (metals and other exotic bracket atoms).
std::optional<std::vector<int>> allowed_valences(const std::string& element, int charge) {
  if (element == "H") {
    if (charge == 0) return std::vector<int>{1};
    return std::vector<int>{0};
  }
  for (const auto& row : valence_rows()) {
    for (int i = 0; i < 6; ++i) {
      if (row.symbols[i] != element) continue;
      const int shifted = i - charge;
      if (shifted < 0 || shifted > 5) return std::vector<int>{};
      return row.valences[shifted];
    }
  }
  return std::nullopt;
}

int aromatic_bond_count(const Molecule& mol, int atom) {
  int count = 0;
  for (int bond : mol.incident(atom)) {
    if (mol.bonds()[bond].order == BondOrder::kAromatic) ++count;
  }
  return count;
}

}  // namespace

int bond_order_sum(const Molecule& mol, int atom) {
  int sum = 0;
  for (int bond : mol.incident(atom)) {
    const BondOrder order = mol.bonds()[bond].order;
    sum += order == BondOrder::kAromatic ? 1 : static_cast<int>(order);
  }
  return sum;
}

int default_implicit_h(const Molecule& mol, int atom) {
  const Atom& a = mol.atoms()[atom];
  const auto allowed = allowed_valences(a.element, a.formal_charge);
  if (!allowed || allowed->empty()) return 0;
  int used = bond_order_sum(mol, atom);
  // Aromatic atoms carry one extra bond's worth of valence when it fits
  // (pyridine-type); pyrrole-type atoms fall through to zero.
  if (a.aromatic && aromatic_bond_count(mol, atom) > 0) ++used;
  for (int v : *allowed) {
    if (v >= used) return v - used;
  }
  return 0;
}

bool is_organic_subset(std::string_view element) {
  static constexpr std::array<std::string_view, 10> kOrganic = {"B", "C",  "N",  "O", "P",
                                                                "S", "F", "Cl", "Br", "I"};
  return std::find(kOrganic.begin(), kOrganic.end(), element) != kOrganic.end();
}

// ---------------------------------------------------------------------------
// Parser

namespace {

void check_valences(Molecule& mol) {
  for (int i = 0; i < static_cast<int>(mol.atom_count()); ++i) {
    Atom& atom = mol.mutable_atom(i);
    const auto allowed = allowed_valences(atom.element, atom.formal_charge);
    const int sum = bond_order_sum(mol, i);
    if (!atom.bracket) {
      if (!allowed || allowed->empty()) {
        throw ParseError("no valence model for " + atom.element);
      }
      if (sum > allowed->back()) {
        throw ParseError("valence violation on atom " + std::to_string(i) + " (" + atom.element +
                         ")");
      }
      atom.implicit_h = default_implicit_h(mol, i);
      continue;
    }
    if (!allowed) continue;
    const int max_valence = allowed->empty() ? -1 : allowed->back();
    if (sum + atom.explicit_h > max_valence) {
      throw ParseError("valence violation on atom " + std::to_string(i) + " ([" + atom.element +
                       "])");
    }
  }
}

void check_aromaticity(const Molecule& mol) {
  for (std::size_t b = 0; b < mol.bonds().size(); ++b) {
    const Bond& bond = mol.bonds()[b];
    if (bond.order != BondOrder::kAromatic) continue;
    if (!mol.atoms()[bond.a].aromatic || !mol.atoms()[bond.b].aromatic) {
      throw ParseError("aromatic bond between non-aromatic atoms");
    }
    if (!mol.in_ring(static_cast<int>(b))) throw ParseError("aromatic bond outside a ring");
  }
  for (int i = 0; i < static_cast<int>(mol.atom_count()); ++i) {
    if (mol.atoms()[i].aromatic && aromatic_bond_count(mol, i) < 2) {
      throw ParseError("aromatic atom " + std::to_string(i) + " not in an aromatic ring");
    }
  }
}

}  // namespace

Molecule parse(const std::vector<Token>& tokens) {
  Molecule mol;
  struct PendingBond {
    BondOrder order;
    bool set = false;
  };
  struct OpenRing {
    int atom;
    PendingBond bond;
  };
  // Implicit bonds between aromatic atoms are provisional: outside rings they
  // become single bonds (biphenyl written without '-').
  std::vector<int> implicit_aromatic;

  int prev = -1;
  PendingBond pending;
  std::vector<int> branches;
  std::map<int, OpenRing> rings;
  bool just_opened_branch = false;

  auto default_order = [&](int a, int b) {
    return mol.atoms()[a].aromatic && mol.atoms()[b].aromatic ? BondOrder::kAromatic
                                                                : BondOrder::kSingle;
  };
  auto connect = [&](int a, int b, PendingBond bond) {
    const BondOrder order = bond.set ? bond.order : default_order(a, b);
    if (!mol.add_bond(a, b, order)) {
      throw ParseError(a == b ? "ring closure bonds an atom to itself"
                              : "duplicate bond between atoms " + std::to_string(a) + " and " +
                                    std::to_string(b));
    }
    if (!bond.set && order == BondOrder::kAromatic) {
      implicit_aromatic.push_back(static_cast<int>(mol.bonds().size()) - 1);
    }
  };

  for (const Token& token : tokens) {
    switch (token.kind) {
      case TokenKind::kOrganicAtom:
      case TokenKind::kBracketAtom: {
        Atom atom;
        atom.element = token.element;
        atom.aromatic = token.aromatic;
        atom.bracket = token.kind == TokenKind::kBracketAtom;
        atom.formal_charge = token.charge;
        atom.explicit_h = token.hydrogens;
        const int index = mol.add_atom(std::move(atom));
        if (prev >= 0) {
          connect(prev, index, pending);
        } else if (pending.set) {
          throw ParseError("bond with no preceding atom");
        }
        pending = {};
        prev = index;
        just_opened_branch = false;
        break;
      }
      case TokenKind::kBond:
        if (prev < 0) throw ParseError("bond with no preceding atom");
        if (pending.set) throw ParseError("consecutive bond symbols");
        pending = {token.order, true};
        break;
      case TokenKind::kRingClosure: {
        if (prev < 0) throw ParseError("ring closure with no preceding atom");
        if (just_opened_branch) throw ParseError("ring closure directly after '('");
        auto it = rings.find(token.ring_number);
        if (it == rings.end()) {
          rings.emplace(token.ring_number, OpenRing{prev, pending});
        } else {
          PendingBond bond = it->second.bond;
          if (pending.set) {
            if (bond.set && bond.order != pending.order) {
              throw ParseError("conflicting ring closure bond orders");
            }
            bond = pending;
          }
          connect(it->second.atom, prev, bond);
          rings.erase(it);
        }
        pending = {};
        break;
      }
      case TokenKind::kBranchOpen:
        if (prev < 0) throw ParseError("branch with no preceding atom");
        if (pending.set) throw ParseError("bond before '('");
        branches.push_back(prev);
        just_opened_branch = true;
        break;
      case TokenKind::kBranchClose:
        if (branches.empty()) throw ParseError("unmatched ')'");
        if (just_opened_branch) throw ParseError("empty branch");
        if (pending.set) throw ParseError("bond with no following atom");
        prev = branches.back();
        branches.pop_back();
        break;
      case TokenKind::kDot:
        if (prev < 0) throw ParseError("'.' with no preceding atom");
        if (pending.set) throw ParseError("bond with no following atom");
        if (!branches.empty()) throw ParseError("'.' inside a branch");
        prev = -1;
        break;
    }
  }

  if (mol.empty()) throw ParseError("no atoms");
  if (pending.set) throw ParseError("bond with no following atom");
  if (!branches.empty()) throw ParseError("unclosed branch");
  if (!rings.empty()) {
    throw ParseError("ring closure " + std::to_string(rings.begin()->first) + " never paired");
  }
  if (prev < 0) throw ParseError("trailing '.'");

  mol.finalize();
  if (!implicit_aromatic.empty()) {
    // Rebuild with non-ring implicit aromatic bonds demoted to single.
    Molecule fixed;
    for (const Atom& atom : mol.atoms()) fixed.add_atom(atom);
    for (std::size_t b = 0; b < mol.bonds().size(); ++b) {
      Bond bond = mol.bonds()[b];
      const bool provisional = std::find(implicit_aromatic.begin(), implicit_aromatic.end(),
                                         static_cast<int>(b)) != implicit_aromatic.end();
      if (provisional && !mol.in_ring(static_cast<int>(b))) bond.order = BondOrder::kSingle;
      fixed.add_bond(bond.a, bond.b, bond.order);
    }
    fixed.finalize();
    mol = std::move(fixed);
  }
  check_aromaticity(mol);
  check_valences(mol);
  return mol;
}

Molecule parse_smiles(std::string_view text) { return parse(tokenize(text)); }

bool is_valid(std::string_view text) noexcept {
  try {
    if (text.empty()) return false;
    parse_smiles(text);
    return true;
  } catch (...) {
    return false;
  }
}

}  // namespace vectorplus::chem
