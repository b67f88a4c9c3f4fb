#include <catch_amalgamated.hpp>

#include "ethnocode/heatmap.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace ethnocode;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an ethnocode::Error");
  return ErrorKind::InvalidArgument;
}

Unit make_unit(const std::string& doc, std::size_t ref, std::set<std::string> codes,
               std::map<std::string, std::string> meta = {}) {
  Unit u;
  u.doc_id = doc;
  u.reference = ref;
  u.text = "text " + std::to_string(ref);
  u.codes = std::move(codes);
  u.extra_metadata = std::move(meta);
  return u;
}


std::vector<std::string> labels(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("i" + std::to_string(100 + i));
  return out;
}

}  // namespace

TEST_CASE("build_matrix modes", "[heatmap]") {
  Corpus corpus({make_unit("4020_20110408_DD", 0, {"Pain"}, {{"Location", "Clinic"}}),
                 make_unit("4020_20110408_DD", 1, {"Pain", "Cost"}),
                 make_unit("4020_20110409_DD", 0, {"Pain"}),
                 make_unit("4023_20110513_DD", 0, {}, {{"Location", "Home"}})},
                {});
  auto counts = build_matrix(corpus, {"Pain", "Cost", "meta:Location", "meta:Location=Home"}, CellMode::count);
  CHECK(counts.respondents == std::vector<std::string>{"4020", "4023"});
  CHECK(counts.at(0, 0) == 3);
  CHECK(counts.at(0, 1) == 0);
  CHECK(counts.at(1, 0) == 1);
  CHECK(counts.at(2, 0) == 1);
  CHECK(counts.at(3, 1) == 1);
  auto binary = build_matrix(corpus, {"Pain"}, CellMode::binary);
  CHECK(binary.at(0, 0) == 1);
  auto prop = build_matrix(corpus, {"Pain"}, CellMode::proportion);
  CHECK(prop.at(0, 0) == 1.0);
  CHECK(prop.at(0, 1) == 0.0);

  CHECK(kind_of([&] { build_matrix(corpus, {"Nope"}, CellMode::count); }) == ErrorKind::NotFound);
  CHECK(kind_of([&] { build_matrix(corpus, {"meta:Nope"}, CellMode::count); }) == ErrorKind::NotFound);
  CHECK(kind_of([&] { build_matrix(corpus, {"topic:0"}, CellMode::count); }) == ErrorKind::NotFound);
}

TEST_CASE("build_matrix topic attributes", "[heatmap]") {
  Corpus corpus({make_unit("1_20200101_AB", 0, {}), make_unit("2_20200101_AB", 0, {})}, {});
  TopicModel tm;
  tm.topics = 2;
  tm.documents = {"1_20200101_AB#0", "2_20200101_AB#0"};
  tm.theta = {0.9, 0.1, 0.2, 0.8};
  auto m = build_matrix(corpus, {"topic:0", "topic:1"}, CellMode::binary, &tm);
  CHECK(m.values.data == std::vector<double>{1, 0, 0, 1});
}

TEST_CASE("hand-computed dendrogram", "[heatmap]") {
  auto d = hier_cluster({{0}, {1}, {10}, {11}}, {"p0", "p1", "p10", "p11"}, Linkage::single, Metric::euclidean);
  REQUIRE(d.merges.size() == 3);
  CHECK(d.merges[0].left == 0);
  CHECK(d.merges[0].right == 1);
  CHECK(d.merges[0].height == 1);
  CHECK(d.merges[1].left == 2);
  CHECK(d.merges[1].right == 3);
  CHECK(d.merges[2].height == 9);
  CHECK(d.leaf_order == std::vector<std::size_t>{0, 1, 2, 3});

  auto same = hier_cluster({{1, 0, 1}, {0, 1, 0}, {1, 0, 1}}, {"a", "b", "c"}, Linkage::average, Metric::jaccard);
  CHECK(same.merges[0].height == 0);
  CHECK(same.merges[0].left == 0);
  CHECK(same.merges[0].right == 2);
  CHECK(kind_of([] { hier_cluster({{1}}, {"x"}, Linkage::single, Metric::euclidean); }) == ErrorKind::TooFew);
}

TEST_CASE("linkage heights match a brute-force oracle", "[heatmap][property]") {
  Rng rng(9);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 2 + rng.below(29), dims = 1 + rng.below(6);
    const bool binary = trial % 2;
    std::vector<std::vector<double>> items(n);
    for (auto& it : items)
      for (std::size_t k = 0; k < dims; ++k) it.push_back(binary ? static_cast<double>(rng.below(2)) : rng.normal());
    for (auto linkage : {Linkage::single, Linkage::complete, Linkage::average}) {
      const Metric metric = binary ? Metric::jaccard : Metric::euclidean;
      auto d = hier_cluster(items, labels(n), linkage, metric);
      auto oracle = testsupport::linkage_oracle(items, linkage, metric);
      REQUIRE(d.merges.size() == oracle.size());
      for (std::size_t i = 0; i < oracle.size(); ++i) CHECK(d.merges[i].height == Catch::Approx(oracle[i]).margin(1e-9));
      for (std::size_t i = 1; i < d.merges.size(); ++i) CHECK(d.merges[i].height >= d.merges[i - 1].height - 1e-12);
      std::vector<std::size_t> sorted = d.leaf_order;
      std::sort(sorted.begin(), sorted.end());
      CHECK(sorted == identity_order(n));
    }
  }
}

TEST_CASE("cutting the tree recovers planted blocks", "[heatmap]") {
  Rng rng(2);
  AttributeMatrix m;
  m.mode = CellMode::binary;
  for (int a = 0; a < 12; ++a) m.attributes.push_back("code" + std::to_string(a));
  for (int r = 0; r < 20; ++r) m.respondents.push_back("r" + std::to_string(r));
  m.values = Matrix(12, 20);
  for (std::size_t a = 0; a < 12; ++a)
    for (std::size_t r = 0; r < 20; ++r) {
      const bool on_block = (a < 6) == (r < 10);
      m.values(a, r) = rng.bernoulli(on_block ? 0.9 : 0.05) ? 1 : 0;
    }
  auto d = hier_cluster(m, Axis::columns, Linkage::average, Metric::jaccard);
  auto cut = cut_tree(d, 2);
  for (std::size_t r = 0; r < 20; ++r) CHECK((cut[r] == cut[0]) == (r < 10));
  auto rows = cut_tree(hier_cluster(m, Axis::rows, Linkage::average, Metric::jaccard), 2);
  for (std::size_t a = 0; a < 12; ++a) CHECK((rows[a] == rows[0]) == (a < 6));

  std::set<std::size_t> distinct;
  for (auto c : cut_tree(d, 20)) distinct.insert(c);
  CHECK(distinct.size() == 20);
  CHECK(kind_of([&] { cut_tree(d, 0); }) == ErrorKind::InvalidK);

  auto tree = merge_tree_json(d);
  CHECK(tree.at("size") == 20);
  CHECK(tree.at("children").size() == 2);
}

TEST_CASE("render_heatmap orders and permutations", "[heatmap]") {
  AttributeMatrix one;
  one.attributes = {"a"};
  one.respondents = {"r"};
  one.values = Matrix(1, 1, 2.0);
  auto r1 = render_heatmap(one, {0}, {0});
  std::size_t rects = 0;
  for (std::size_t p = 0; (p = r1.svg.find("<rect", p)) != std::string::npos; ++p) ++rects;
  CHECK(rects == 1);

  Rng rng(3);
  AttributeMatrix m;
  for (int a = 0; a < 5; ++a) m.attributes.push_back("a" + std::to_string(a));
  for (int r = 0; r < 7; ++r) m.respondents.push_back("r" + std::to_string(r));
  m.values = Matrix(5, 7);
  for (auto& v : m.values.data) v = static_cast<double>(rng.below(5));
  CHECK(render_heatmap(m, identity_order(5), identity_order(7)).table == matrix_table(m));

  for (int trial = 0; trial < 20; ++trial) {
    auto rows = identity_order(5), cols = identity_order(7);
    rng.shuffle(rows.begin(), rows.end());
    rng.shuffle(cols.begin(), cols.end());
    auto out = render_heatmap(m, rows, cols, Palette::reds);
    std::multiset<std::string> before, after;
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(out.table.rows[i][0] == m.attributes[rows[i]]);
      for (std::size_t j = 0; j < 7; ++j) {
        CHECK(out.table.rows[i][j + 1] == util::format_double(m.values(rows[i], cols[j])));
        after.insert(out.table.rows[i][j + 1]);
        before.insert(util::format_double(m.values(i, j)));
      }
    }
    CHECK(before == after);
  }
  CHECK(kind_of([&] { render_heatmap(m, {0, 1, 2, 3, 3}, identity_order(7)); }) == ErrorKind::InvalidOrder);
  CHECK(kind_of([&] { render_heatmap(m, identity_order(5), identity_order(6)); }) == ErrorKind::InvalidOrder);
  CHECK(matrix_from_table(matrix_table(m)).values == m.values);
}
