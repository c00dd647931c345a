#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "astrec/rng.hpp"

namespace astrec {

enum class Source : std::uint8_t { Logged, Uniform };

struct Interaction {
  int user = 0;
  int item = 0;
  int label = 0;       // binary preference
  int raw_rating = 0;  // 1..5 when the file carried one, 0 = absent
  Source source = Source::Logged;
};

inline bool operator==(const Interaction& a, const Interaction& b) {
  return a.user == b.user && a.item == b.item && a.label == b.label &&
         a.raw_rating == b.raw_rating && a.source == b.source;
}

// D_P (logged), D_Q (uniform train, possibly empty), plus uniform validation
// and test splits. Immutable after assembly.
struct Dataset {
  int n_users = 0;
  int n_items = 0;
  std::vector<Interaction> biased_train;
  std::vector<Interaction> uniform_train;
  std::vector<Interaction> validation;
  std::vector<Interaction> test;
};

// Raw ids as they appear in files, before dense remapping.
struct RawTriple {
  long long user = 0;
  long long item = 0;
  int rating = 0;
};

// Dense 0-based ids assigned by sorted raw id, so files that already use
// 0..n-1 map to themselves and reloads are stable. Persisted beside the
// dataset as two-column text.
struct IdMap {
  std::vector<long long> users;  // dense -> raw, ascending
  std::vector<long long> items;
  int user_dense(long long raw) const;  // -1 when absent
  int item_dense(long long raw) const;
};

IdMap build_id_map(const std::vector<const std::vector<RawTriple>*>& files);
void save_id_map(const std::string& path, const IdMap& map);
IdMap load_id_map(const std::string& path);

int binarize(int rating, int threshold = 3);

// Layered loading: parse raw triples, then resolve ids against a map. The
// one-shot load_triples builds a private map from the single file.
std::vector<RawTriple> read_triples_raw(const std::string& path, char sep = '\t',
                                        bool one_based = false);
std::vector<Interaction> to_interactions(const std::vector<RawTriple>& rows,
                                         const IdMap& map, int threshold,
                                         Source source);

struct LoadedTriples {
  std::vector<Interaction> interactions;
  IdMap map;
  int n_users = 0;
  int n_items = 0;
};

LoadedTriples load_triples(const std::string& path, char sep = '\t',
                           int threshold = 3, bool one_based = false,
                           Source source = Source::Logged);

// Dense ASCII rating matrix, one row per user, 0 = unobserved.
LoadedTriples load_matrix_ascii(const std::string& path, int threshold = 3,
                                Source source = Source::Logged);

// Writes `raw_user<sep>raw_item<sep>rating` lines. Dense ids pass through
// unchanged when no map is given; binary labels are coded 5/1 when the
// interaction carries no raw rating.
void write_triples(const std::string& path,
                   const std::vector<Interaction>& interactions,
                   const IdMap* map = nullptr, char sep = '\t');

// Seeded random partition; sizes floor(n*f) with the remainder to test.
struct UniformSplit {
  std::vector<Interaction> train;
  std::vector<Interaction> validation;
  std::vector<Interaction> test;
};
UniformSplit split_uniform(const std::vector<Interaction>& uniform,
                           double f_train, double f_val, double f_test,
                           Rng& rng);

std::vector<Interaction> drop_negatives(const std::vector<Interaction>& in);

// Keeps the first occurrence of each (user,item) pair, preserving order.
std::vector<Interaction> dedupe_pairs(const std::vector<Interaction>& in);

// Id bounds, source tags, and disjointness of the uniform-sourced splits.
void check_dataset(const Dataset& ds);

}  // namespace astrec
