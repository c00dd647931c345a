// Unit tests for dataset loading, binarization, id remapping, and splits.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <string>

#include "astrec/data.hpp"
#include "astrec/errors.hpp"
#include "astrec/rng.hpp"

using namespace astrec;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name, const std::string& content = "")
      : path("/tmp/astrec_test_" + name) {
    if (!content.empty()) {
      std::ofstream out(path);
      out << content;
    }
  }
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("binarize: threshold rule and range validation") {
  CHECK(binarize(3, 3) == 1);
  CHECK(binarize(2, 3) == 0);
  CHECK(binarize(5, 6) == 0);
  CHECK_THROWS_AS(binarize(0, 3), DataError);
  CHECK_THROWS_AS(binarize(6, 3), DataError);
  // Monotone in rating for a fixed threshold.
  for (int t = 1; t <= 6; ++t)
    for (int r = 1; r < 5; ++r)
      CHECK(binarize(r, t) <= binarize(r + 1, t));
}

TEST_CASE("load_triples: two-line file binarizes and remaps") {
  TempFile f("triples.txt", "1 1 5\n2 1 2\n");
  auto lt = load_triples(f.path, ' ', 3);
  REQUIRE(lt.interactions.size() == 2);
  CHECK(lt.n_users == 2);
  CHECK(lt.n_items == 1);
  CHECK(lt.interactions[0].user == 0);
  CHECK(lt.interactions[0].item == 0);
  CHECK(lt.interactions[0].label == 1);
  CHECK(lt.interactions[1].user == 1);
  CHECK(lt.interactions[1].label == 0);
}

TEST_CASE("load_triples: empty file gives empty list and (0,0)") {
  TempFile f("empty.txt", "\n");
  auto lt = load_triples(f.path, '\t');
  CHECK(lt.interactions.empty());
  CHECK(lt.n_users == 0);
  CHECK(lt.n_items == 0);
}

TEST_CASE("load_triples: malformed line names the line number") {
  TempFile f("bad.txt", "1 x 3\n");
  CHECK_THROWS_WITH_AS(load_triples(f.path, ' '),
                       doctest::Contains(":1:"), DataError);
  TempFile g("badrange.txt", "1 1 3\n1 2 9\n");
  CHECK_THROWS_WITH_AS(load_triples(g.path, ' '),
                       doctest::Contains(":2:"), DataError);
  CHECK_THROWS_AS(load_triples("/tmp/astrec_no_such_file"), DataError);
}

TEST_CASE("load_triples: dense ids follow sorted raw ids, one_based shifts raw") {
  TempFile f("sorted.txt", "30\t7\t5\n10\t9\t1\n20\t7\t4\n");
  auto lt = load_triples(f.path, '\t', 3);
  // raw users 10,20,30 -> dense 0,1,2 regardless of file order
  CHECK(lt.interactions[0].user == 2);
  CHECK(lt.interactions[1].user == 0);
  CHECK(lt.interactions[2].user == 1);
  CHECK(lt.map.users == std::vector<long long>{10, 20, 30});
  auto lt1 = load_triples(f.path, '\t', 3, /*one_based=*/true);
  CHECK(lt1.map.users == std::vector<long long>{9, 19, 29});
}

TEST_CASE("load_matrix_ascii: nonzero cells become interactions") {
  TempFile f("mat.txt", "5 0\n0 1\n");
  auto lt = load_matrix_ascii(f.path, 3);
  REQUIRE(lt.interactions.size() == 2);
  CHECK(lt.n_users == 2);
  CHECK(lt.n_items == 2);
  CHECK(lt.interactions[0].user == 0);
  CHECK(lt.interactions[0].item == 0);
  CHECK(lt.interactions[0].label == 1);
  CHECK(lt.interactions[1].user == 1);
  CHECK(lt.interactions[1].item == 1);
  CHECK(lt.interactions[1].label == 0);
}

TEST_CASE("load_matrix_ascii: all-zero matrix is empty; ragged rows fail") {
  TempFile f("zeros.txt", "0 0 0\n0 0 0\n");
  auto lt = load_matrix_ascii(f.path);
  CHECK(lt.interactions.empty());
  CHECK(lt.n_users == 2);
  CHECK(lt.n_items == 3);
  TempFile g("ragged.txt", "1 2 3\n1 2\n");
  CHECK_THROWS_WITH_AS(load_matrix_ascii(g.path),
                       doctest::Contains("row 1"), DataError);
}

TEST_CASE("load_matrix_ascii: nonzero count matches an independent scan") {
  // Build a 17x13 matrix with a deterministic sprinkle of ratings.
  Rng r(31, 0);
  std::string body;
  int expected = 0;
  for (int row = 0; row < 17; ++row) {
    for (int col = 0; col < 13; ++col) {
      int v = r.uniform() < 0.3 ? 1 + static_cast<int>(r.uniform_int(5)) : 0;
      expected += (v != 0);
      body += std::to_string(v);
      body += (col + 1 < 13) ? ' ' : '\n';
    }
  }
  TempFile f("scan.txt", body);
  auto lt = load_matrix_ascii(f.path);
  CHECK(static_cast<int>(lt.interactions.size()) == expected);
}

TEST_CASE("write_triples then load_triples reproduces the interactions") {
  Rng r(5, 1);
  std::vector<Interaction> in;
  for (int n = 0; n < 200; ++n) {
    Interaction it;
    it.user = static_cast<int>(r.uniform_int(40));
    it.item = static_cast<int>(r.uniform_int(25));
    it.raw_rating = 1 + static_cast<int>(r.uniform_int(5));
    it.label = binarize(it.raw_rating, 3);
    it.source = Source::Uniform;
    in.push_back(it);
  }
  // Ensure every dense id appears so the reload infers the same universe:
  for (int u = 0; u < 40; ++u) in.push_back({u, 0, 1, 5, Source::Uniform});
  for (int i = 0; i < 25; ++i) in.push_back({0, i, 1, 5, Source::Uniform});
  TempFile f("roundtrip.txt");
  write_triples(f.path, in);
  auto lt = load_triples(f.path, '\t', 3, false, Source::Uniform);
  REQUIRE(lt.interactions.size() == in.size());
  CHECK(lt.n_users == 40);
  CHECK(lt.n_items == 25);
  for (std::size_t i = 0; i < in.size(); ++i) CHECK(lt.interactions[i] == in[i]);
}

TEST_CASE("id map round-trips through its text file") {
  IdMap map;
  map.users = {3, 17, 42};
  map.items = {0, 5};
  TempFile f("idmap.txt");
  save_id_map(f.path, map);
  IdMap back = load_id_map(f.path);
  CHECK(back.users == map.users);
  CHECK(back.items == map.items);
  CHECK(back.user_dense(17) == 1);
  CHECK(back.user_dense(4) == -1);
  CHECK(back.item_dense(5) == 1);
}

TEST_CASE("split_uniform: floor sizes with remainder to test") {
  std::vector<Interaction> in(100);
  for (int i = 0; i < 100; ++i) in[i] = {i / 10, i % 10, 1, 5, Source::Uniform};
  Rng r(9, 0);
  auto sp = split_uniform(in, 0.05, 0.05, 0.90, r);
  CHECK(sp.train.size() == 5);
  CHECK(sp.validation.size() == 5);
  CHECK(sp.test.size() == 90);
}

TEST_CASE("split_uniform: partitions the input for every seed and size") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    for (int n : {0, 1, 7, 100, 1003}) {
      std::vector<Interaction> in(n);
      for (int i = 0; i < n; ++i) in[i] = {i, i, 1, 5, Source::Uniform};
      Rng r(seed, 4);
      auto sp = split_uniform(in, 0.3, 0.2, 0.5, r);
      CHECK(sp.train.size() + sp.validation.size() + sp.test.size() == in.size());
      std::set<int> seen;
      auto add = [&](const std::vector<Interaction>& v) {
        for (const auto& it : v) CHECK(seen.insert(it.user).second);
      };
      add(sp.train);
      add(sp.validation);
      add(sp.test);
      CHECK(seen.size() == in.size());
    }
  }
}

TEST_CASE("split_uniform: all-to-test, determinism, bad fractions") {
  std::vector<Interaction> in(20);
  for (int i = 0; i < 20; ++i) in[i] = {i, 0, 1, 5, Source::Uniform};
  Rng r1(7, 0);
  auto sp = split_uniform(in, 0, 0, 1, r1);
  CHECK(sp.train.empty());
  CHECK(sp.validation.empty());
  CHECK(sp.test.size() == 20);
  Rng r2(7, 0), r3(7, 0);
  auto a = split_uniform(in, 0.5, 0.25, 0.25, r2);
  auto b = split_uniform(in, 0.5, 0.25, 0.25, r3);
  for (std::size_t i = 0; i < a.train.size(); ++i)
    CHECK(a.train[i] == b.train[i]);
  Rng r4(7, 0);
  CHECK_THROWS_AS(split_uniform(in, 0.5, 0.5, 0.5, r4), ConfigError);
}

TEST_CASE("drop_negatives keeps exactly the positives") {
  std::vector<Interaction> in = {{0, 1, 1, 5, Source::Logged},
                                 {0, 2, 0, 1, Source::Logged}};
  auto out = drop_negatives(in);
  REQUIRE(out.size() == 1);
  CHECK(out[0].item == 1);
  Rng r(3, 3);
  std::vector<Interaction> big;
  int positives = 0;
  for (int i = 0; i < 500; ++i) {
    int lab = r.uniform() < 0.4 ? 1 : 0;
    positives += lab;
    big.push_back({i, 0, lab, 0, Source::Logged});
  }
  CHECK(drop_negatives(big).size() == static_cast<std::size_t>(positives));
  auto all = drop_negatives(out);
  CHECK(all.size() == out.size());  // all-positive list unchanged
}

TEST_CASE("dedupe_pairs keeps first occurrence in order") {
  std::vector<Interaction> in = {{1, 2, 1, 5, Source::Uniform},
                                 {3, 4, 0, 1, Source::Uniform},
                                 {1, 2, 0, 1, Source::Uniform}};
  auto out = dedupe_pairs(in);
  REQUIRE(out.size() == 2);
  CHECK(out[0].label == 1);
  CHECK(out[1].user == 3);
}

TEST_CASE("check_dataset rejects id violations and split overlap") {
  Dataset ds;
  ds.n_users = 3;
  ds.n_items = 3;
  ds.biased_train = {{0, 0, 1, 5, Source::Logged}};
  ds.uniform_train = {{1, 1, 1, 5, Source::Uniform}};
  ds.validation = {{1, 2, 0, 1, Source::Uniform}};
  ds.test = {{2, 2, 1, 5, Source::Uniform}};
  CHECK_NOTHROW(check_dataset(ds));
  Dataset bad = ds;
  bad.test.push_back({1, 1, 1, 5, Source::Uniform});  // duplicates uniform_train
  CHECK_THROWS_AS(check_dataset(bad), DataError);
  Dataset oob = ds;
  oob.test.push_back({5, 0, 1, 5, Source::Uniform});
  CHECK_THROWS_AS(check_dataset(oob), DataError);
  Dataset mis = ds;
  mis.uniform_train[0].source = Source::Logged;
  CHECK_THROWS_AS(check_dataset(mis), DataError);
}
