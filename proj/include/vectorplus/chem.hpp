#pragma once

// SMILES lexing/parsing, validity, canonical SMILES, descriptors and circular
// fingerprints. Everything here is a pure function of its inputs.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vectorplus::chem {

enum class TokenKind {
  kOrganicAtom,
  kBracketAtom,
  kBond,
  kRingClosure,
  kBranchOpen,
  kBranchClose,
  kDot,
};

enum class BondOrder : std::uint8_t { kSingle = 1, kDouble = 2, kTriple = 3, kAromatic = 4 };

struct Token {
  TokenKind kind;
  std::string lexeme;  // exact source text

  // Atom payload (organic or bracket).
  std::string element;
  bool aromatic = false;
  int charge = 0;
  int hydrogens = 0;  // bracket atoms only

  // Bond payload. Stereo bonds '/' and '\' are lexed as single bonds.
  BondOrder order = BondOrder::kSingle;

  // Ring-closure payload, 0..99.
  int ring_number = 0;
};

std::vector<Token> tokenize(std::string_view text);

struct Atom {
  std::string element;
  int formal_charge = 0;
  int explicit_h = 0;  // from a bracket atom
  int implicit_h = 0;  // filled from default valences (organic subset only)
  bool aromatic = false;
  bool bracket = false;

  int total_h() const { return explicit_h + implicit_h; }
};

struct Bond {
  int a = 0;
  int b = 0;
  BondOrder order = BondOrder::kSingle;
};

class Molecule {
 public:
  Molecule() = default;

  const std::vector<Atom>& atoms() const { return atoms_; }
  const std::vector<Bond>& bonds() const { return bonds_; }
  std::size_t atom_count() const { return atoms_.size(); }
  bool empty() const { return atoms_.empty(); }

  // Indices into bonds() touching atom i.
  const std::vector<int>& incident(int atom) const { return incident_[atom]; }
  int degree(int atom) const { return static_cast<int>(incident_[atom].size()); }
  int other(int bond, int atom) const {
    return bonds_[bond].a == atom ? bonds_[bond].b : bonds_[bond].a;
  }
  // Bond index between a and b, or -1.
  int bond_between(int a, int b) const;
  // Whether the bond lies on a cycle.
  bool in_ring(int bond) const { return ring_bond_[bond]; }

  int add_atom(Atom atom);
  // Returns false on self-bonds or duplicate bonds.
  bool add_bond(int a, int b, BondOrder order);
  // Recomputes derived state (ring membership). Called by the parser.
  void finalize();

  Atom& mutable_atom(int i) { return atoms_[i]; }

 private:
  std::vector<Atom> atoms_;
  std::vector<Bond> bonds_;
  std::vector<std::vector<int>> incident_;
  std::vector<bool> ring_bond_;
};

Molecule parse(const std::vector<Token>& tokens);
Molecule parse_smiles(std::string_view text);

// True iff tokenize + parse succeed. Never throws.
bool is_valid(std::string_view text) noexcept;

// Deterministic canonical SMILES; isomorphic molecules map to the same string.
std::string canonical(const Molecule& molecule);
// Canonical form of a SMILES string, or nullopt when it does not parse.
std::optional<std::string> canonical_smiles(std::string_view text) noexcept;

// Canonical atom ranks (0..n-1, all distinct).
std::vector<int> canonical_ranks(const Molecule& molecule);

// Sum of bond orders for valence purposes (aromatic bonds count 1).
int bond_order_sum(const Molecule& molecule, int atom);
// Number of implicit hydrogens an organic-subset atom gets in this graph.
int default_implicit_h(const Molecule& molecule, int atom);

bool is_organic_subset(std::string_view element);
double atomic_mass(std::string_view element);  // throws UnsupportedElement

// ---------------------------------------------------------------------------
// Descriptors

// Additive logP table: atom type -> contribution.
class LogPTable {
 public:
  static const LogPTable& builtin();
  static LogPTable from_text(std::string_view text);
  static LogPTable from_file(const std::string& path);

  // Throws UnsupportedElement for unknown types.
  double contribution(const std::string& type) const;
  bool has(const std::string& type) const;
  const std::string& version() const { return version_; }

 private:
  std::vector<std::pair<std::string, double>> entries_;
  std::string version_;
};

// Atom type key used to look up logP contributions, e.g. "C.ar", "O.oh".
std::string logp_atom_type(const Molecule& molecule, int atom);
double logp(const Molecule& molecule, const LogPTable& table = LogPTable::builtin());

struct Properties {
  double mw = 0.0;
  double logp = 0.0;
  int hbd = 0;
  int hba = 0;
};

Properties properties(const Molecule& molecule, const LogPTable& table = LogPTable::builtin());

// ---------------------------------------------------------------------------
// Fingerprints

class Fingerprint {
 public:
  explicit Fingerprint(std::size_t width = 2048, int radius = 2);

  std::size_t width() const { return width_; }
  int radius() const { return radius_; }
  void set(std::size_t bit) { words_[bit >> 6] |= (std::uint64_t{1} << (bit & 63)); }
  bool test(std::size_t bit) const { return (words_[bit >> 6] >> (bit & 63)) & 1U; }
  std::size_t popcount() const;
  std::vector<std::size_t> on_bits() const;
  const std::vector<std::uint64_t>& words() const { return words_; }

  bool operator==(const Fingerprint& other) const = default;

 private:
  std::size_t width_;
  int radius_;
  std::vector<std::uint64_t> words_;
};

// Per-atom environment hashes for each radius 0..radius ([r][atom]).
std::vector<std::vector<std::uint64_t>> environment_hashes(const Molecule& molecule, int radius);

// Circular fingerprint; width must be a power of two.
Fingerprint fingerprint(const Molecule& molecule, int radius = 2, std::size_t width = 2048);

double tanimoto(const Fingerprint& a, const Fingerprint& b);

}  // namespace vectorplus::chem
