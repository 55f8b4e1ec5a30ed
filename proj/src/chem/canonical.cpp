#include <algorithm>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "vectorplus/chem.hpp"

namespace vectorplus::chem {

namespace {

// Dense ranks of `keys` (equal keys share a rank). Returns the class count.
template <typename Key>
int dense_ranks(const std::vector<Key>& keys, std::vector<int>& ranks) {
  const std::size_t n = keys.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return keys[a] < keys[b]; });
  ranks.assign(n, 0);
  int rank = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && keys[order[i - 1]] < keys[order[i]]) ++rank;
    ranks[order[i]] = rank;
  }
  return n == 0 ? 0 : rank + 1;
}

// Iteratively refine ranks with sorted (bond order, neighbour rank) lists
// until the number of classes stops growing.
int refine(const Molecule& mol, std::vector<int>& ranks) {
  const int n = static_cast<int>(mol.atom_count());
  int classes = n == 0 ? 0 : *std::max_element(ranks.begin(), ranks.end()) + 1;
  using Key = std::pair<int, std::vector<std::pair<int, int>>>;
  while (true) {
    std::vector<Key> keys(n);
    for (int i = 0; i < n; ++i) {
      keys[i].first = ranks[i];
      for (int bond : mol.incident(i)) {
        keys[i].second.emplace_back(static_cast<int>(mol.bonds()[bond].order),
                                    ranks[mol.other(bond, i)]);
      }
      std::sort(keys[i].second.begin(), keys[i].second.end());
    }
    std::vector<int> next;
    const int next_classes = dense_ranks(keys, next);
    ranks = std::move(next);
    if (next_classes == classes) return classes;
    classes = next_classes;
  }
}

}  // namespace

std::vector<int> canonical_ranks(const Molecule& mol) {
  const int n = static_cast<int>(mol.atom_count());
  using Invariant = std::tuple<std::string, int, int, int, bool>;
  std::vector<Invariant> initial(n);
  for (int i = 0; i < n; ++i) {
    const Atom& a = mol.atoms()[i];
    initial[i] = {a.element, a.formal_charge, mol.degree(i), a.total_h(), a.aromatic};
  }
  std::vector<int> ranks;
  dense_ranks(initial, ranks);
  int classes = refine(mol, ranks);

  // Tie breaking: split the lowest tied class by promoting its smallest-index
  // member, then refine again. Symmetric atoms give the same output whichever
  // one is promoted.
  while (classes < n) {
    std::vector<int> count(n, 0);
    for (int r : ranks) ++count[r];
    int tied = 0;
    while (count[tied] < 2) ++tied;
    int chosen = -1;
    for (int i = 0; i < n; ++i) {
      if (ranks[i] == tied) {
        chosen = i;
        break;
      }
    }
    std::vector<std::pair<int, int>> keys(n);
    for (int i = 0; i < n; ++i) keys[i] = {ranks[i], (ranks[i] == tied && i != chosen) ? 1 : 0};
    dense_ranks(keys, ranks);
    classes = refine(mol, ranks);
  }
  return ranks;
}

namespace {

std::string atom_text(const Molecule& mol, int index) {
  const Atom& atom = mol.atoms()[index];
  std::string symbol = atom.element;
  if (atom.aromatic) {
    symbol[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(symbol[0])));
  }
  const bool bare = is_organic_subset(atom.element) && atom.formal_charge == 0 &&
                    atom.total_h() == default_implicit_h(mol, index);
  if (bare) return symbol;

  std::string text = "[" + symbol;
  if (atom.total_h() > 0) {
    text += "H";
    if (atom.total_h() > 1) text += std::to_string(atom.total_h());
  }
  if (atom.formal_charge != 0) {
    text += atom.formal_charge > 0 ? "+" : "-";
    const int magnitude = std::abs(atom.formal_charge);
    if (magnitude > 1) text += std::to_string(magnitude);
  }
  return text + "]";
}

std::string bond_text(const Molecule& mol, int bond) {
  const Bond& b = mol.bonds()[bond];
  switch (b.order) {
    case BondOrder::kDouble:
      return "=";
    case BondOrder::kTriple:
      return "#";
    case BondOrder::kAromatic:
      return "";
    case BondOrder::kSingle:
      return mol.atoms()[b.a].aromatic && mol.atoms()[b.b].aromatic ? "-" : "";
  }
  return "";
}

std::string ring_label(int number) {
  return number < 10 ? std::to_string(number) : "%" + std::to_string(number);
}

class Writer {
 public:
  Writer(const Molecule& mol, const std::vector<int>& ranks)
      : mol_(mol),
        ranks_(ranks),
        visited_(mol.atom_count(), false),
        tree_bond_(mol.bonds().size(), false),
        closure_(mol.bonds().size(), false),
        children_(mol.atom_count()),
        openings_(mol.atom_count()),
        closings_(mol.atom_count()),
        ring_digit_(mol.bonds().size(), -1) {}

  std::string write() {
    const int n = static_cast<int>(mol_.atom_count());
    std::vector<int> by_rank(n);
    std::iota(by_rank.begin(), by_rank.end(), 0);
    std::sort(by_rank.begin(), by_rank.end(), [&](int a, int b) { return ranks_[a] < ranks_[b]; });
    std::string out;
    for (int start : by_rank) {
      if (visited_[start]) continue;
      plan(start, -1);
      if (!out.empty()) out += ".";
      emit(start, out);
    }
    return out;
  }

 private:
  std::vector<int> sorted_neighbour_bonds(int atom) const {
    std::vector<int> bonds = mol_.incident(atom);
    std::sort(bonds.begin(), bonds.end(), [&](int x, int y) {
      return ranks_[mol_.other(x, atom)] < ranks_[mol_.other(y, atom)];
    });
    return bonds;
  }

  // First pass: spanning tree and ring-closure bonds in canonical order.
  void plan(int atom, int parent_bond) {
    visited_[atom] = true;
    for (int bond : sorted_neighbour_bonds(atom)) {
      if (bond == parent_bond) continue;
      const int nbr = mol_.other(bond, atom);
      if (!visited_[nbr]) {
        tree_bond_[bond] = true;
        children_[atom].push_back(bond);
        plan(nbr, bond);
      } else if (!tree_bond_[bond] && !closure_[bond]) {
        // nbr was visited earlier: it opens the ring, this atom closes it.
        closure_[bond] = true;
        openings_[nbr].push_back(bond);
        closings_[atom].push_back(bond);
      }
    }
  }

  void emit(int atom, std::string& out) {
    out += atom_text(mol_, atom);
    std::vector<int> released;
    for (int bond : closings_[atom]) {
      out += ring_label(ring_digit_[bond]);
      released.push_back(ring_digit_[bond]);
    }
    std::vector<int> openings = openings_[atom];
    std::sort(openings.begin(), openings.end(), [&](int x, int y) {
      return ranks_[mol_.other(x, atom)] < ranks_[mol_.other(y, atom)];
    });
    for (int bond : openings) {
      int digit = 1;
      while (std::find(in_use_.begin(), in_use_.end(), digit) != in_use_.end()) ++digit;
      in_use_.push_back(digit);
      ring_digit_[bond] = digit;
      out += bond_text(mol_, bond) + ring_label(digit);
    }
    for (int digit : released) in_use_.erase(std::find(in_use_.begin(), in_use_.end(), digit));

    const auto& children = children_[atom];
    for (std::size_t i = 0; i < children.size(); ++i) {
      const int bond = children[i];
      const bool branch = i + 1 < children.size();
      if (branch) out += "(";
      out += bond_text(mol_, bond);
      emit(mol_.other(bond, atom), out);
      if (branch) out += ")";
    }
  }

  const Molecule& mol_;
  const std::vector<int>& ranks_;
  std::vector<bool> visited_;
  std::vector<bool> tree_bond_;
  std::vector<bool> closure_;
  std::vector<std::vector<int>> children_;
  std::vector<std::vector<int>> openings_;
  std::vector<std::vector<int>> closings_;
  std::vector<int> ring_digit_;
  std::vector<int> in_use_;
};

}  // namespace

std::string canonical(const Molecule& molecule) {
  if (molecule.empty()) return "";
  const std::vector<int> ranks = canonical_ranks(molecule);
  return Writer(molecule, ranks).write();
}

std::optional<std::string> canonical_smiles(std::string_view text) noexcept {
  try {
    return canonical(parse_smiles(text));
  } catch (...) {
    return std::nullopt;
  }
}

}  // namespace vectorplus::chem
