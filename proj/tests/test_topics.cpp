#include <catch_amalgamated.hpp>

#include <map>
#include <numeric>

#include "ethnocode/topics.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace ethnocode;

TEST_CASE("LDA separates disjoint vocabulary blocks", "[topics]") {
  std::vector<int> block;
  auto docs = testsupport::two_block_docs(11, &block);
  LdaOptions opt;
  opt.topics = 2;
  opt.iterations = 500;
  opt.alpha = 0.1;
  auto m = fit_lda(docs, opt);

  for (std::size_t k = 0; k < 2; ++k) {
    auto top = top_words(m, k, 3);
    std::set<std::string> words;
    for (auto& [w, p] : top) words.insert(w);
    CHECK((words == std::set<std::string>{"a", "b", "c"} || words == std::set<std::string>{"x", "y", "z"}));
  }
  // purity of argmax topic against known block membership
  std::map<std::pair<int, std::size_t>, int> table;
  for (std::size_t d = 0; d < docs.size(); ++d) ++table[{block[d], m.dominant_topic(d)}];
  int majority = 0;
  for (int b = 0; b < 2; ++b) majority += std::max(table[{b, 0}], table[{b, 1}]);
  CHECK(majority / 100.0 >= 0.95);
}

TEST_CASE("LDA normalization and bookkeeping invariants", "[topics][property]") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::vector<std::string>> docs(1 + rng.below(20));
    for (auto& d : docs)
      for (std::size_t i = rng.below(15); i > 0; --i) d.push_back("w" + std::to_string(rng.below(12)));
    docs[0].push_back("w0");
    docs[0].push_back("w1");
    LdaOptions opt;
    opt.topics = 1 + rng.below(2);
    opt.iterations = 20 + rng.below(20);
    opt.seed = rng.next();
    auto m = fit_lda(docs, opt);
    const std::size_t V = m.vocabulary.size();
    for (std::size_t k = 0; k < m.topics; ++k) {
      double s = 0;
      for (std::size_t w = 0; w < V; ++w) s += m.phi_at(k, w);
      CHECK(s == Catch::Approx(1.0).margin(1e-9));
    }
    for (std::size_t d = 0; d < docs.size(); ++d) {
      double s = 0;
      for (std::size_t k = 0; k < m.topics; ++k) s += m.theta_at(d, k);
      CHECK(s == Catch::Approx(1.0).margin(1e-9));
    }
    for (auto total : m.assignment_totals) CHECK(total == m.token_count);
    CHECK(m.log_likelihood.size() == opt.iterations);
  }
}

TEST_CASE("LDA log-likelihood trends upward", "[topics]") {
  auto docs = testsupport::two_block_docs(5);
  LdaOptions opt;
  opt.topics = 2;
  opt.iterations = 200;
  auto m = fit_lda(docs, opt);
  const std::size_t tenth = m.log_likelihood.size() / 10;
  const double first = std::accumulate(m.log_likelihood.begin(), m.log_likelihood.begin() + tenth, 0.0) / tenth;
  const double last = std::accumulate(m.log_likelihood.end() - tenth, m.log_likelihood.end(), 0.0) / tenth;
  CHECK(last >= first);
}

TEST_CASE("LDA with one topic is smoothed word frequency", "[topics]") {
  std::vector<std::vector<std::string>> docs{{"a", "a", "b"}, {"c"}, {"a", "c"}};
  LdaOptions opt;
  opt.topics = 1;
  opt.iterations = 5;
  opt.beta = 0.5;
  auto m = fit_lda(docs, opt);
  REQUIRE(m.vocabulary == std::vector<std::string>{"a", "b", "c"});
  const double denom = 6 + 3 * 0.5;
  CHECK(m.phi_at(0, 0) == Catch::Approx(3.5 / denom).margin(1e-12));
  CHECK(m.phi_at(0, 1) == Catch::Approx(1.5 / denom).margin(1e-12));
  CHECK(m.phi_at(0, 2) == Catch::Approx(2.5 / denom).margin(1e-12));
  for (std::size_t d = 0; d < 3; ++d) CHECK(m.theta_at(d, 0) == 1.0);
  CHECK(m.alpha == 50.0);
}

TEST_CASE("LDA determinism and errors", "[topics]") {
  auto docs = testsupport::two_block_docs(9);
  LdaOptions opt;
  opt.topics = 3;
  opt.iterations = 30;
  auto a = fit_lda(docs, opt);
  auto b = fit_lda(docs, opt);
  CHECK(a.phi == b.phi);
  CHECK(a.theta == b.theta);
  opt.seed = 99;
  CHECK(fit_lda(docs, opt).phi != a.phi);

  opt.topics = 7;
  try {
    fit_lda(docs, opt);
    FAIL("expected InvalidK");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidK);
  }
  try {
    fit_lda(std::vector<std::vector<std::string>>{{}, {}}, LdaOptions{});
    FAIL("expected EmptyVocabulary");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyVocabulary);
  }
}

TEST_CASE("top_words ranks and ties", "[topics]") {
  std::vector<std::vector<std::string>> docs{{"b", "a", "c", "c"}};
  LdaOptions opt;
  opt.topics = 1;
  opt.iterations = 2;
  auto m = fit_lda(docs, opt);
  auto all = top_words(m, 0, 10);
  REQUIRE(all.size() == 3);
  CHECK(all[0].first == "c");
  CHECK(all[1].first == "a");
  CHECK(all[2].first == "b");
  double s = 0;
  for (auto& [w, p] : all) s += p;
  CHECK(s == Catch::Approx(1.0).margin(1e-9));
  CHECK(top_words(m, 0, 0).empty());
  CHECK_THROWS_AS(top_words(m, 1, 3), Error);
}

TEST_CASE("topic model export round trip", "[topics]") {
  testsupport::TempDir dir;
  LdaOptions opt;
  opt.topics = 2;
  opt.iterations = 20;
  auto m = fit_lda(testsupport::two_block_docs(1), opt);
  save_topic_model(m, dir.path());
  auto back = load_topic_model(dir.path());
  CHECK(back.vocabulary == m.vocabulary);
  CHECK(back.documents == m.documents);
  CHECK(back.phi == m.phi);
  CHECK(back.theta == m.theta);
  CHECK(back.seed == m.seed);
  auto meta = nlohmann::json::parse(util::read_file(dir / "model.json"));
  CHECK(meta.at("estimate") == "final sampler state");
}

TEST_CASE("LDA over a tokenized corpus uses unit keys", "[topics]") {
  TokenizedCorpus c{{{"d", 0}, tokenize("apples oranges apples")}, {{"d", 1}, tokenize("trucks cars")}};
  LdaOptions opt;
  opt.topics = 2;
  opt.iterations = 10;
  auto m = fit_lda(c, opt);
  CHECK(m.documents == std::vector<std::string>{"d#0", "d#1"});
  CHECK(m.token_count == 5);
}
