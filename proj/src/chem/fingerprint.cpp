#include <algorithm>
#include <bit>
#include <cstdint>
#include <vector>

#include "vectorplus/chem.hpp"
#include "vectorplus/errors.hpp"

namespace vectorplus::chem {

namespace {

// Fixed hash so fingerprints are identical across platforms and builds.
constexpr std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t combine(std::uint64_t seed, std::uint64_t value) {
  return mix(seed ^ (value + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

std::uint64_t hash_string(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Fingerprint::Fingerprint(std::size_t width, int radius)
    : width_(width), radius_(radius), words_((width + 63) / 64, 0) {}

std::size_t Fingerprint::popcount() const {
  std::size_t total = 0;
  for (auto w : words_) total += static_cast<std::size_t>(std::popcount(w));
  return total;
}

std::vector<std::size_t> Fingerprint::on_bits() const {
  std::vector<std::size_t> bits;
  for (std::size_t i = 0; i < width_; ++i) {
    if (test(i)) bits.push_back(i);
  }
  return bits;
}

std::vector<std::vector<std::uint64_t>> environment_hashes(const Molecule& mol, int radius) {
  const int n = static_cast<int>(mol.atom_count());
  std::vector<std::vector<std::uint64_t>> layers;
  std::vector<std::uint64_t> current(n);
  for (int i = 0; i < n; ++i) {
    const Atom& atom = mol.atoms()[i];
    bool ring = false;
    for (int bond : mol.incident(i)) ring = ring || mol.in_ring(bond);
    std::uint64_t h = hash_string(atom.element);
    h = combine(h, static_cast<std::uint64_t>(atom.formal_charge + 16));
    h = combine(h, static_cast<std::uint64_t>(mol.degree(i)));
    h = combine(h, static_cast<std::uint64_t>(atom.total_h()));
    h = combine(h, atom.aromatic ? 1 : 0);
    h = combine(h, ring ? 1 : 0);
    current[i] = h;
  }
  layers.push_back(current);
  for (int r = 1; r <= radius; ++r) {
    std::vector<std::uint64_t> next(n);
    for (int i = 0; i < n; ++i) {
      std::vector<std::pair<std::uint64_t, std::uint64_t>> nbrs;
      for (int bond : mol.incident(i)) {
        nbrs.emplace_back(static_cast<std::uint64_t>(mol.bonds()[bond].order),
                          current[mol.other(bond, i)]);
      }
      std::sort(nbrs.begin(), nbrs.end());
      std::uint64_t h = combine(static_cast<std::uint64_t>(r), current[i]);
      for (const auto& [order, value] : nbrs) h = combine(combine(h, order), value);
      next[i] = h;
    }
    current = std::move(next);
    layers.push_back(current);
  }
  return layers;
}

Fingerprint fingerprint(const Molecule& mol, int radius, std::size_t width) {
  if (width == 0 || !std::has_single_bit(width)) {
    throw WidthMismatch("fingerprint width must be a power of two, got " + std::to_string(width));
  }
  if (radius < 0) throw ConfigError("fingerprint radius must be >= 0");
  Fingerprint fp(width, radius);
  for (const auto& layer : environment_hashes(mol, radius)) {
    for (std::uint64_t h : layer) fp.set(h & (width - 1));
  }
  return fp;
}

double tanimoto(const Fingerprint& a, const Fingerprint& b) {
  if (a.width() != b.width()) {
    throw WidthMismatch("tanimoto on widths " + std::to_string(a.width()) + " and " +
                        std::to_string(b.width()));
  }
  std::size_t both = 0;
  std::size_t either = 0;
  for (std::size_t i = 0; i < a.words().size(); ++i) {
    both += static_cast<std::size_t>(std::popcount(a.words()[i] & b.words()[i]));
    either += static_cast<std::size_t>(std::popcount(a.words()[i] | b.words()[i]));
  }
  if (either == 0) return 1.0;
  return static_cast<double>(both) / static_cast<double>(either);
}

}  // namespace vectorplus::chem
