#include "astrec/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "astrec/errors.hpp"

namespace astrec {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Runs of the separator count as one delimiter; fields are trimmed.
std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && line[i] == sep) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != sep) ++j;
    if (j > i) out.push_back(trim(line.substr(i, j - i)));
    i = j;
  }
  out.erase(std::remove(out.begin(), out.end(), std::string()), out.end());
  return out;
}

long long parse_ll(const std::string& field, const std::string& where) {
  long long v = 0;
  auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || p != field.data() + field.size()) {
    throw DataError(where + ": not an integer: '" + field + "'");
  }
  return v;
}

long long pair_key(int user, int item) {
  return static_cast<long long>(user) * 2000000011LL + item;
}

}  // namespace

int IdMap::user_dense(long long raw) const {
  auto it = std::lower_bound(users.begin(), users.end(), raw);
  if (it == users.end() || *it != raw) return -1;
  return static_cast<int>(it - users.begin());
}

int IdMap::item_dense(long long raw) const {
  auto it = std::lower_bound(items.begin(), items.end(), raw);
  if (it == items.end() || *it != raw) return -1;
  return static_cast<int>(it - items.begin());
}

IdMap build_id_map(const std::vector<const std::vector<RawTriple>*>& files) {
  IdMap map;
  for (const auto* rows : files) {
    for (const RawTriple& r : *rows) {
      map.users.push_back(r.user);
      map.items.push_back(r.item);
    }
  }
  std::sort(map.users.begin(), map.users.end());
  map.users.erase(std::unique(map.users.begin(), map.users.end()), map.users.end());
  std::sort(map.items.begin(), map.items.end());
  map.items.erase(std::unique(map.items.begin(), map.items.end()), map.items.end());
  return map;
}

void save_id_map(const std::string& path, const IdMap& map) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write id map: " + path);
  out << "# users\n";
  for (std::size_t d = 0; d < map.users.size(); ++d)
    out << map.users[d] << '\t' << d << '\n';
  out << "# items\n";
  for (std::size_t d = 0; d < map.items.size(); ++d)
    out << map.items[d] << '\t' << d << '\n';
  if (!out) throw DataError("write failed: " + path);
}

IdMap load_id_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open id map: " + path);
  IdMap map;
  std::vector<long long>* side = nullptr;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    if (line == "# users") { side = &map.users; continue; }
    if (line == "# items") { side = &map.items; continue; }
    if (!side) throw DataError(path + ":" + std::to_string(lineno) + ": entry before section header");
    auto fields = split_fields(line, '\t');
    if (fields.size() != 2)
      throw DataError(path + ":" + std::to_string(lineno) + ": expected raw<TAB>dense");
    const std::string where = path + ":" + std::to_string(lineno);
    long long raw = parse_ll(fields[0], where);
    long long dense = parse_ll(fields[1], where);
    if (dense != static_cast<long long>(side->size()))
      throw DataError(where + ": dense ids must be consecutive from 0");
    side->push_back(raw);
  }
  return map;
}

int binarize(int rating, int threshold) {
  if (rating < 1 || rating > 5)
    throw DataError("rating " + std::to_string(rating) + " outside 1..5");
  return rating >= threshold ? 1 : 0;
}

std::vector<RawTriple> read_triples_raw(const std::string& path, char sep,
                                        bool one_based) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path);
  std::vector<RawTriple> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    auto fields = split_fields(line, sep);
    if (fields.size() != 3)
      throw DataError(where + ": expected user" + sep + "item" + sep + "rating, got " +
                      std::to_string(fields.size()) + " fields");
    RawTriple r;
    r.user = parse_ll(fields[0], where);
    r.item = parse_ll(fields[1], where);
    long long rating = parse_ll(fields[2], where);
    if (rating < 1 || rating > 5)
      throw DataError(where + ": rating " + std::to_string(rating) + " outside 1..5");
    r.rating = static_cast<int>(rating);
    if (one_based) {
      r.user -= 1;
      r.item -= 1;
    }
    rows.push_back(r);
  }
  return rows;
}

std::vector<Interaction> to_interactions(const std::vector<RawTriple>& rows,
                                         const IdMap& map, int threshold,
                                         Source source) {
  std::vector<Interaction> out;
  out.reserve(rows.size());
  for (const RawTriple& r : rows) {
    Interaction it;
    it.user = map.user_dense(r.user);
    it.item = map.item_dense(r.item);
    if (it.user < 0 || it.item < 0)
      throw DataError("id (" + std::to_string(r.user) + "," + std::to_string(r.item) +
                      ") missing from id map");
    it.raw_rating = r.rating;
    it.label = binarize(r.rating, threshold);
    it.source = source;
    out.push_back(it);
  }
  return out;
}

LoadedTriples load_triples(const std::string& path, char sep, int threshold,
                           bool one_based, Source source) {
  LoadedTriples lt;
  auto rows = read_triples_raw(path, sep, one_based);
  lt.map = build_id_map({&rows});
  lt.interactions = to_interactions(rows, lt.map, threshold, source);
  lt.n_users = static_cast<int>(lt.map.users.size());
  lt.n_items = static_cast<int>(lt.map.items.size());
  return lt;
}

LoadedTriples load_matrix_ascii(const std::string& path, int threshold,
                                Source source) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path);
  LoadedTriples lt;
  std::string line;
  int row = 0;
  int n_cols = -1;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::istringstream ss(line);
    std::vector<int> cells;
    std::string tok;
    while (ss >> tok) {
      cells.push_back(static_cast<int>(
          parse_ll(tok, path + ": row " + std::to_string(row))));
    }
    if (n_cols < 0) {
      n_cols = static_cast<int>(cells.size());
    } else if (static_cast<int>(cells.size()) != n_cols) {
      throw DataError(path + ": row " + std::to_string(row) + " has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(n_cols));
    }
    for (int col = 0; col < n_cols; ++col) {
      if (cells[col] == 0) continue;  // unobserved
      Interaction it;
      it.user = row;
      it.item = col;
      it.raw_rating = cells[col];
      it.label = binarize(cells[col], threshold);
      it.source = source;
      lt.interactions.push_back(it);
    }
    ++row;
  }
  lt.n_users = row;
  lt.n_items = std::max(n_cols, 0);
  lt.map.users.resize(lt.n_users);
  lt.map.items.resize(lt.n_items);
  for (int u = 0; u < lt.n_users; ++u) lt.map.users[u] = u;
  for (int i = 0; i < lt.n_items; ++i) lt.map.items[i] = i;
  return lt;
}

void write_triples(const std::string& path,
                   const std::vector<Interaction>& interactions,
                   const IdMap* map, char sep) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write: " + path);
  for (const Interaction& it : interactions) {
    long long u = map ? map->users.at(it.user) : it.user;
    long long i = map ? map->items.at(it.item) : it.item;
    int rating = it.raw_rating ? it.raw_rating : (it.label ? 5 : 1);
    out << u << sep << i << sep << rating << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

UniformSplit split_uniform(const std::vector<Interaction>& uniform,
                           double f_train, double f_val, double f_test,
                           Rng& rng) {
  if (f_train < 0 || f_val < 0 || f_test < 0 ||
      std::abs(f_train + f_val + f_test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be nonnegative and sum to 1");
  }
  const std::size_t n = uniform.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) {  // Fisher-Yates
    std::size_t j = rng.uniform_int(i);
    std::swap(idx[i - 1], idx[j]);
  }
  auto n_train = static_cast<std::size_t>(n * f_train + 1e-9);
  auto n_val = static_cast<std::size_t>(n * f_val + 1e-9);
  if (n_train + n_val > n) n_val = n - n_train;
  UniformSplit sp;
  for (std::size_t i = 0; i < n; ++i) {
    const Interaction& it = uniform[idx[i]];
    if (i < n_train) sp.train.push_back(it);
    else if (i < n_train + n_val) sp.validation.push_back(it);
    else sp.test.push_back(it);
  }
  return sp;
}

std::vector<Interaction> drop_negatives(const std::vector<Interaction>& in) {
  std::vector<Interaction> out;
  out.reserve(in.size());
  for (const Interaction& it : in)
    if (it.label == 1) out.push_back(it);
  return out;
}

std::vector<Interaction> dedupe_pairs(const std::vector<Interaction>& in) {
  std::vector<Interaction> out;
  std::unordered_set<long long> seen;
  for (const Interaction& it : in)
    if (seen.insert(pair_key(it.user, it.item)).second) out.push_back(it);
  return out;
}

void check_dataset(const Dataset& ds) {
  auto check_ids = [&](const std::vector<Interaction>& v, const char* name) {
    for (const Interaction& it : v) {
      if (it.user < 0 || it.user >= ds.n_users || it.item < 0 || it.item >= ds.n_items)
        throw DataError(std::string(name) + ": id out of range (" +
                        std::to_string(it.user) + "," + std::to_string(it.item) + ")");
    }
  };
  check_ids(ds.biased_train, "biased_train");
  check_ids(ds.uniform_train, "uniform_train");
  check_ids(ds.validation, "validation");
  check_ids(ds.test, "test");
  for (const Interaction& it : ds.biased_train)
    if (it.source != Source::Logged)
      throw DataError("biased_train must carry source=Logged");
  std::unordered_set<long long> seen;
  auto check_uniform = [&](const std::vector<Interaction>& v, const char* name) {
    for (const Interaction& it : v) {
      if (it.source != Source::Uniform)
        throw DataError(std::string(name) + " must carry source=Uniform");
      if (!seen.insert(pair_key(it.user, it.item)).second)
        throw DataError(std::string(name) + ": pair (" + std::to_string(it.user) +
                        "," + std::to_string(it.item) +
                        ") appears in more than one uniform split");
    }
  };
  check_uniform(ds.uniform_train, "uniform_train");
  check_uniform(ds.validation, "validation");
  check_uniform(ds.test, "test");
}

}  // namespace astrec
