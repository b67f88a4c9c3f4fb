#include <catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "ethnocode/embeddings.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace ethnocode;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (auto& x : m.data) x = rng.normal();
  return m;
}

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) e(i, j) = m(i, j);
  return e;
}


}  // namespace

TEST_CASE("Jacobi SVD agrees with a dense oracle", "[embeddings][linalg]") {
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t r = 2 + rng.below(12), c = 2 + rng.below(12);
    auto m = random_matrix(rng, r, c);
    auto ours = svd(m);
    Eigen::JacobiSVD<Eigen::MatrixXd> oracle(to_eigen(m));
    const auto& sv = oracle.singularValues();
    REQUIRE(ours.s.size() == static_cast<std::size_t>(sv.size()));
    for (std::size_t k = 0; k < ours.s.size(); ++k) CHECK(ours.s[k] == Catch::Approx(sv(k)).margin(1e-9));
    // reconstruction
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        double acc = 0;
        for (std::size_t k = 0; k < ours.s.size(); ++k) acc += ours.u(i, k) * ours.s[k] * ours.v(j, k);
        CHECK(acc == Catch::Approx(m(i, j)).margin(1e-9));
      }
  }
}

TEST_CASE("hand-computed singular values", "[embeddings][linalg]") {
  Matrix a(3, 2);
  a.data = {1, 1, 0, 1, 1, 0};
  auto d = svd(a);
  CHECK(d.s[0] == Catch::Approx(std::sqrt(3.0)).margin(1e-12));
  CHECK(d.s[1] == Catch::Approx(1.0).margin(1e-12));

  Matrix perm(3, 3);
  perm.data = {0, 2, 0, 0, 0, 1, 3, 0, 0};
  auto p = svd(perm);
  CHECK(p.s == std::vector<double>{3, 2, 1});
}

TEST_CASE("truncated projection error equals the tail energy", "[embeddings][property]") {
  Rng rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 6 + rng.below(20), d = 3 + rng.below(8);
    auto m = random_matrix(rng, n, d);
    const std::size_t k = 1 + rng.below(d - 1);
    auto p = project_svd(m, k);
    Eigen::JacobiSVD<Eigen::MatrixXd> oracle(to_eigen(m));
    double tail = 0;
    for (Eigen::Index i = static_cast<Eigen::Index>(k); i < oracle.singularValues().size(); ++i)
      tail += oracle.singularValues()(i) * oracle.singularValues()(i);
    auto approx = multiply(p.coordinates, p.components.transposed());
    double err = 0;
    for (std::size_t i = 0; i < m.data.size(); ++i) err += (m.data[i] - approx.data[i]) * (m.data[i] - approx.data[i]);
    CHECK(err == Catch::Approx(tail).margin(1e-6));
    for (std::size_t c = 0; c < k; ++c) {
      double big = 0;
      for (std::size_t i = 0; i < d; ++i)
        if (std::abs(p.components(i, c)) > std::abs(big)) big = p.components(i, c);
      CHECK(big > 0);
    }
  }
}

TEST_CASE("project_svd exact rank and errors", "[embeddings]") {
  Rng rng(8);
  Matrix basis = random_matrix(rng, 2, 10);
  Matrix coef = random_matrix(rng, 30, 2);
  Matrix plane = multiply(coef, basis);
  auto p = project_svd(plane, 2);
  auto back = multiply(p.coordinates, p.components.transposed());
  double err = 0;
  for (std::size_t i = 0; i < plane.data.size(); ++i) err = std::max(err, std::abs(plane.data[i] - back.data[i]));
  CHECK(err <= 1e-9);

  try {
    project_svd(plane, 3);
    FAIL("expected RankDeficient");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::RankDeficient);
  }
  CHECK_THROWS_AS(project_svd(plane, 10), Error);
  CHECK_THROWS_AS(project_svd(Matrix(4, 3), 1), Error);
}

TEST_CASE("SGNS places a planted synonym first", "[embeddings]") {
  auto sentences = testsupport::planted_synonym_corpus(3);
  SgnsOptions opt;
  opt.dim = 20;
  opt.window = 2;
  opt.epochs = 5;
  opt.seed = 42;
  auto v = train_sgns(sentences, opt);
  CHECK(v.source == VectorSource::trained);
  CHECK(neighbors(v, "p", 1)[0].first == "q");
  CHECK(neighbors(v, "q", 1)[0].first == "p");
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(cosine(v.row(i), v.row(i), v.dim) == Catch::Approx(1.0).margin(1e-6));
    CHECK(norm(v.row(i), v.dim) > 0);
  }
  auto again = train_sgns(sentences, opt);
  CHECK(again.matrix == v.matrix);

  try {
    train_sgns(std::vector<std::vector<std::string>>{{"solo", "solo"}}, opt);
    FAIL("expected InsufficientVocabulary");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InsufficientVocabulary);
  }
  opt.subsample = 1e-4;
  CHECK_NOTHROW(train_sgns(sentences, opt));
}

TEST_CASE("vector files", "[embeddings]") {
  auto v = parse_vectors("3 4 glove-6B\nalpha 1 0 0 0\nbeta 0 1 0 0\ngamma 0 0 1 0\n");
  CHECK(v.size() == 3);
  CHECK(v.dim == 4);
  CHECK(v.source == VectorSource::loaded);
  CHECK(v.provenance == "glove-6B");
  CHECK(parse_vectors(format_vectors(v)).matrix == v.matrix);
  try {
    parse_vectors("2 4\nalpha 1 0 0 0\nbeta 0 1 0 0 7\n");
    FAIL("expected FormatError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::FormatError);
  }
  CHECK_THROWS_AS(parse_vectors("1 4\nalpha 1 0 x 0\n"), Error);
}

TEST_CASE("unit embeddings coverage", "[embeddings]") {
  std::vector<Unit> units;
  for (std::size_t r = 0; r < 196; ++r) units.push_back(Unit{"doc", r, {}, {}, "text", {}, {}});
  Corpus corpus(units, {});
  auto file = [](std::size_t rows, bool extra) {
    std::string s = std::to_string(rows + (extra ? 1 : 0)) + " 3 bert-base\n";
    for (std::size_t r = 0; r < rows; ++r) s += "doc " + std::to_string(r) + " 0.1 0.2 0.3\n";
    if (extra) s += "ghost#0 1 1 1\n";
    return s;
  };
  auto partial = parse_unit_embeddings(file(150, true), corpus);
  CHECK(partial.vectors.size() == 150);
  CHECK(partial.missing_units.size() == 46);
  CHECK(partial.unknown_keys.size() == 1);
  CHECK(partial.coverage_warning);
  CHECK(partial.provenance == "bert-base");
  auto full = parse_unit_embeddings(file(196, false), corpus);
  CHECK_FALSE(full.coverage_warning);
  CHECK(full.missing_units.empty());
  CHECK_THROWS_AS(parse_unit_embeddings("1 3\ndoc 0 1 2\n", corpus), Error);
}

TEST_CASE("k-means behaviour", "[embeddings]") {
  Rng rng(21);
  Matrix blobs(200, 2);
  for (std::size_t i = 0; i < 200; ++i) {
    const double cx = i < 100 ? -10.0 : 10.0;
    blobs(i, 0) = cx + rng.normal();
    blobs(i, 1) = rng.normal();
  }
  auto km = kmeans(blobs, 2, 3);
  CHECK(km.converged);
  for (std::size_t i = 0; i < 200; ++i) CHECK(km.assignment[i] == km.assignment[i < 100 ? 0 : 199]);
  CHECK(km.assignment[0] != km.assignment[199]);

  Matrix pts = random_matrix(rng, 12, 3);
  auto each = kmeans(pts, 12, 1);
  CHECK(each.wcss == 0.0);
  std::set<std::size_t> distinct(each.assignment.begin(), each.assignment.end());
  CHECK(distinct.size() == 12);
  CHECK_THROWS_AS(kmeans(pts, 13, 1), Error);
}

TEST_CASE("k-means WCSS never increases", "[embeddings][property]") {
  Rng rng(4);
  for (int trial = 0; trial < 40; ++trial) {
    auto pts = random_matrix(rng, 10 + rng.below(60), 1 + rng.below(4));
    auto km = kmeans(pts, 1 + rng.below(6), rng.next(), 100);
    for (std::size_t i = 1; i < km.wcss_trace.size(); ++i) CHECK(km.wcss_trace[i] <= km.wcss_trace[i - 1] + 1e-9);
  }
}

TEST_CASE("neighbors ordering", "[embeddings]") {
  Matrix m(3, 2);
  m.data = {1, 2, 1, 2, -1, 0};
  auto dup = WordVectors::from_rows({"w1", "w2", "w3"}, m, VectorSource::loaded);
  auto first = neighbors(dup, "w1", 1);
  REQUIRE(first.size() == 1);
  CHECK(first[0].first == "w2");
  CHECK(first[0].second == Catch::Approx(1.0));
  CHECK_THROWS_AS(neighbors(dup, "zzz", 1), Error);

  Matrix eye(4, 4);
  for (std::size_t i = 0; i < 4; ++i) eye(i, i) = 1;
  auto onehot = WordVectors::from_rows({"d", "b", "c", "a"}, eye, VectorSource::loaded);
  auto n = neighbors(onehot, "c", 5);
  REQUIRE(n.size() == 3);
  CHECK(n[0].first == "a");
  CHECK(n[1].first == "b");
  CHECK(n[2].first == "d");
  for (auto& [w, s] : n) CHECK(s == 0.0);
}

TEST_CASE("neighbors are invariant under renaming", "[embeddings][property]") {
  Rng rng(6);
  auto m = random_matrix(rng, 15, 4);
  std::vector<std::string> a, b;
  for (int i = 0; i < 15; ++i) {
    a.push_back("w" + std::to_string(i));
    b.push_back("renamed" + std::to_string(i));
  }
  auto va = WordVectors::from_rows(a, m, VectorSource::loaded);
  auto vb = WordVectors::from_rows(b, m, VectorSource::loaded);
  for (int i = 0; i < 15; ++i) {
    auto na = neighbors(va, a[i], 5);
    auto nb = neighbors(vb, b[i], 5);
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(na[j].first.substr(1) == nb[j].first.substr(7));
      CHECK(na[j].second == nb[j].second);
    }
  }
}

TEST_CASE("projection export flags the periphery", "[embeddings]") {
  Matrix coords(20, 2);
  for (std::size_t i = 0; i < 20; ++i) coords(i, 0) = static_cast<double>(i);
  std::vector<std::string> words;
  for (int i = 0; i < 20; ++i) words.push_back("w" + std::to_string(i));
  auto t = projection_table(words, coords, std::vector<std::size_t>(20, 0));
  CHECK(t.header == std::vector<std::string>{"word", "x", "y", "cluster", "label_me"});
  int flagged = 0;
  for (auto& r : t.rows) flagged += r[4] == "true";
  CHECK(flagged == 2);
  CHECK(t.rows[0][4] == "true");
  CHECK(t.rows[19][4] == "true");
}
