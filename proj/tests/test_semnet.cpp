#include <catch_amalgamated.hpp>

#include "ethnocode/semnet.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace ethnocode;

namespace {

TokenizedUnit unit(const std::string& doc, std::size_t ref, const std::string& text) {
  return {{doc, ref}, tokenize(text)};
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an ethnocode::Error");
  return ErrorKind::InvalidArgument;
}



}  // namespace

TEST_CASE("co-occurrence basics", "[semnet]") {
  auto g = build_cooccurrence({unit("d", 0, "fish chips")}, Scope::unit);
  REQUIRE(g.edges.size() == 1);
  CHECK(g.weight("fish", "chip") == 1);

  auto two = build_cooccurrence({unit("d", 0, "a b"), unit("d", 1, "b a a")}, Scope::unit);
  CHECK(two.weight("a", "b") == 2);
  CHECK(two.nodes.at("a").frequency == 3);
  auto doc = build_cooccurrence({unit("d", 0, "a b"), unit("d", 1, "b a a")}, Scope::document);
  CHECK(doc.weight("a", "b") == 1);
  auto sent = build_cooccurrence({unit("d", 0, "a b. a c")}, Scope::sentence);
  CHECK(sent.weight("a", "b") == 1);
  CHECK(sent.weight("b", "c") == 0);
  CHECK(build_cooccurrence({}, Scope::unit).nodes.empty());
}

TEST_CASE("co-occurrence weights match a brute-force oracle", "[semnet][property]") {
  Rng rng(50);
  const std::vector<std::string> vocab{"pain", "doctor", "family", "money", "work", "hope", "test", "nurse"};
  for (int trial = 0; trial < 20; ++trial) {
    TokenizedCorpus corpus;
    for (int d = 0; d < 50; ++d)
      for (std::size_t r = 0, n = 1 + rng.below(3); r < n; ++r) {
        std::string text;
        for (std::size_t i = 0, len = rng.below(8); i < len; ++i)
          text += vocab[rng.below(vocab.size())] + (rng.bernoulli(0.2) ? ". " : " ");
        corpus.push_back(unit("doc" + std::to_string(d), r, text));
      }
    for (auto scope : {Scope::sentence, Scope::unit, Scope::document}) {
      auto g = build_cooccurrence(corpus, scope);
      CHECK(g.edges == testsupport::cooccurrence_oracle(corpus, scope));
      for (const auto& [k, w] : g.edges) {
        CHECK(k.first < k.second);
        CHECK(g.nodes.count(k.first));
        CHECK(g.nodes.count(k.second));
      }
    }
  }
}

TEST_CASE("token filters use tags", "[semnet]") {
  TokenizedCorpus c{unit("d", 0, "the doctor quickly visited London")};
  c = annotate(c, AnnotationSource::builtin_lexicon());
  auto nouns = build_cooccurrence(c, Scope::unit, TokenFilter::parse("nouns_adjectives"));
  CHECK(nouns.nodes.count("doctor"));
  CHECK_FALSE(nouns.nodes.count("quickli"));
  auto verbs = build_cooccurrence(c, Scope::unit, TokenFilter::parse("verbs_adverbs"));
  CHECK(verbs.nodes.count("quickli"));
  CHECK(verbs.nodes.count("visit"));
  CHECK(build_cooccurrence(c, Scope::unit, TokenFilter::parse("entities_only")).nodes.empty());
  TokenFilter custom{FilterKind::custom, {"doctor", "london"}};
  CHECK(build_cooccurrence(c, Scope::unit, custom).weight("doctor", "london") == 1);
  CHECK_THROWS_AS(TokenFilter::parse("adverbs"), Error);
}

TEST_CASE("seed-word growth", "[semnet]") {
  TokenizedCorpus chain{unit("d", 0, "alpha beta"), unit("d", 1, "beta gamma"), unit("d", 2, "gamma delta")};
  auto g = build_seedword(chain, {"alpha"}, 2, Scope::unit, 1);
  CHECK(g.nodes.size() == 3);
  CHECK(g.nodes.count("gamma"));
  CHECK(g.design.admitted_per_round == std::vector<std::size_t>{2, 1});

  auto none = build_seedword(chain, {"alpha", "gamma", "zzz"}, 3, Scope::unit,
                             std::numeric_limits<double>::infinity());
  CHECK(none.nodes.size() == 2);
  CHECK(none.edges.empty());
  CHECK(kind_of([&] { build_seedword(chain, {"zzz"}, 1, Scope::unit, 1); }) == ErrorKind::SeedsAbsent);
}

TEST_CASE("seed-word graphs are monotone in rounds", "[semnet][property]") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    TokenizedCorpus corpus;
    for (int r = 0; r < 40; ++r) {
      std::string text;
      for (std::size_t i = 0, len = 2 + rng.below(3); i < len; ++i) text += "w" + std::to_string(rng.below(30)) + " ";
      corpus.push_back(unit("d", static_cast<std::size_t>(r), text));
    }
    auto seed = corpus[0].tokens[0].stem;
    std::set<std::string> previous;
    for (std::size_t rounds = 1; rounds <= 5; ++rounds) {
      auto g = build_seedword(corpus, {seed}, rounds, Scope::unit, 1 + static_cast<double>(trial % 2));
      std::set<std::string> nodes;
      for (auto& [n, i] : g.nodes) nodes.insert(n);
      CHECK(std::includes(nodes.begin(), nodes.end(), previous.begin(), previous.end()));
      previous = nodes;
    }
  }
}

TEST_CASE("expand_seeds with vectors", "[semnet]") {
  auto v = parse_vectors("5 3\npain 1 0 0\nache 0.9 0.1 0\nhurt 0.8 0.2 0\nbank 0 0 1\nriver 0 0.1 1\n");
  auto same = expand_seeds({"pain"}, v, 0);
  CHECK(same == std::vector<SeedEntry>{{"pain", true}});
  auto grown = expand_seeds({"pain"}, v, 2);
  CHECK(grown == std::vector<SeedEntry>{{"pain", true}, {"ache", false}, {"hurt", false}});
  CHECK(expand_seeds({"pain", "ache", "oov"}, v, 1).size() == 3);
  CHECK(kind_of([&] { expand_seeds({"oov"}, v, 1); }) == ErrorKind::NotFound);
}

TEST_CASE("pruning policies", "[semnet]") {
  SemanticGraph g;
  g.add_edge("a", "b", 5);
  g.add_edge("a", "c", 2);
  g.add_edge("c", "d", 2);
  g.add_edge("b", "d", 1);
  g.add_edge("x", "y", 2);
  CHECK(prune(g, PrunePolicy::min_weight(1)) == g);
  CHECK(prune(g, PrunePolicy::min_weight(std::numeric_limits<double>::infinity())).nodes.empty());

  auto top = prune(g, PrunePolicy::top_k_edges(3));
  std::vector<std::pair<std::string, std::string>> kept;
  for (auto& [k, w] : top.edges) kept.push_back(k);
  CHECK(kept == std::vector<std::pair<std::string, std::string>>{{"a", "b"}, {"a", "c"}, {"c", "d"}});
  CHECK_FALSE(top.nodes.count("x"));

  auto strong = prune(g, PrunePolicy::top_k_nodes_by_strength(2));
  CHECK(strong.edges.size() == 1);
  CHECK(strong.weight("a", "b") == 5);

  for (auto policy : {PrunePolicy::min_weight(2), PrunePolicy::top_k_edges(2), PrunePolicy::top_k_nodes_by_strength(3)}) {
    auto once = prune(g, policy);
    CHECK(prune(once, policy) == once);
  }
  CHECK_THROWS_AS(prune(g, PrunePolicy::min_weight(0)), Error);
}

TEST_CASE("top_k_edges agrees with a sort oracle", "[semnet][property]") {
  Rng rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    SemanticGraph g;
    for (int e = 0; e < 40; ++e) {
      auto a = "n" + std::to_string(rng.below(12)), b = "n" + std::to_string(rng.below(12));
      if (a != b) g.add_edge(a, b, 1 + rng.below(4));
    }
    std::vector<std::tuple<long, std::string, std::string>> oracle;
    for (auto& [k, w] : g.edges) oracle.emplace_back(-static_cast<long>(w), k.first, k.second);
    std::sort(oracle.begin(), oracle.end());
    const std::size_t k = 1 + rng.below(10);
    auto pruned = prune(g, PrunePolicy::top_k_edges(k));
    std::set<std::pair<std::string, std::string>> expected;
    for (std::size_t i = 0; i < std::min(k, oracle.size()); ++i)
      expected.insert({std::get<1>(oracle[i]), std::get<2>(oracle[i])});
    std::set<std::pair<std::string, std::string>> got;
    for (auto& [key, w] : pruned.edges) got.insert(key);
    CHECK(got == expected);
  }
}

TEST_CASE("Louvain recovers planted cliques", "[semnet]") {
  auto g = testsupport::two_cliques();
  auto c = detect_communities(g);
  CHECK(c.count == 2);
  for (auto n : {"b", "c", "d", "e"}) CHECK(c.assignment.at(n) == c.assignment.at("a"));
  for (auto n : {"w", "x", "y", "z"}) CHECK(c.assignment.at(n) == c.assignment.at("v"));
  CHECK(c.assignment.at("a") != c.assignment.at("v"));
  CHECK(c.modularity == Catch::Approx(20.0 / 21.0 - 0.5).margin(1e-12));
  CHECK(c.modularity > 0.3);
}

TEST_CASE("modularity hand formulas", "[semnet]") {
  SemanticGraph single;
  single.add_edge("a", "b", 3);
  // together: 1 - (6/6)^2 = 0; apart: 2 * (0 - (3/6)^2) = -0.5
  CHECK(modularity(single, {{"a", 0}, {"b", 0}}) == Catch::Approx(0.0).margin(1e-15));
  CHECK(modularity(single, {{"a", 0}, {"b", 1}}) == Catch::Approx(-0.5).margin(1e-15));

  SemanticGraph complete;
  for (char a = 'a'; a < 'g'; ++a)
    for (char b = static_cast<char>(a + 1); b < 'g'; ++b) complete.add_edge(std::string(1, a), std::string(1, b));
  CHECK(detect_communities(complete).count == 1);
}

TEST_CASE("modularity stays within bounds", "[semnet][property]") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    SemanticGraph g;
    for (int e = 0, n = 1 + static_cast<int>(rng.below(40)); e < n; ++e) {
      auto a = "n" + std::to_string(rng.below(15)), b = "n" + std::to_string(rng.below(15));
      if (a != b) g.add_edge(a, b, 1 + rng.below(3));
    }
    if (g.nodes.empty()) continue;
    auto c = detect_communities(g);
    CHECK(c.modularity >= -0.5);
    CHECK(c.modularity <= 1.0);
    std::map<std::string, std::size_t> random;
    for (auto& [n, i] : g.nodes) random[n] = rng.below(4);
    const double q = modularity(g, random);
    CHECK(q >= -0.5);
    CHECK(q <= 1.0);
    auto collapsed = collapse_clusters(g, c.assignment);
    std::size_t intra = 0;
    for (auto& [n, info] : collapsed.nodes) intra += info.intra_weight;
    CHECK(collapsed.total_weight() + intra == g.total_weight());
    CHECK(detect_communities(g).assignment == c.assignment);
  }
}

TEST_CASE("collapse_clusters", "[semnet]") {
  auto g = testsupport::two_cliques();
  auto c = detect_communities(g);
  auto collapsed = collapse_clusters(g, c.assignment);
  CHECK(collapsed.nodes.size() == 2);
  CHECK(collapsed.edges.size() == 1);
  CHECK(collapsed.total_weight() == 1);
  CHECK(collapsed.nodes.begin()->second.intra_weight == 10);

  std::map<std::string, std::size_t> each, one;
  std::size_t i = 0;
  for (auto& [n, info] : g.nodes) {
    each[n] = i++;
    one[n] = 0;
  }
  auto iso = collapse_clusters(g, each);
  CHECK(iso.edges.size() == g.edges.size());
  CHECK(iso.total_weight() == g.total_weight());
  auto single = collapse_clusters(g, one);
  CHECK(single.nodes.size() == 1);
  CHECK(single.edges.empty());

  one.erase("a");
  CHECK(kind_of([&] { collapse_clusters(g, one); }) == ErrorKind::InvalidPartition);
}

TEST_CASE("graph export formats", "[semnet]") {
  testsupport::TempDir dir;
  SemanticGraph empty;
  auto empty_xml = to_graphml(empty);
  CHECK(empty_xml.find("<graphml") != std::string::npos);
  CHECK(from_graphml(empty_xml) == empty);
  CHECK(to_dot(empty) == "graph G {\n}\n");
  CHECK(edge_list_table(empty).rows.empty());

  SemanticGraph one;
  one.add_edge("fish", "chip", 4);
  CHECK(edge_list_table(one).rows == std::vector<std::vector<std::string>>{{"chip", "fish", "4"}});

  TokenizedCorpus corpus{unit("d", 0, "The doctor said \"pain & fear\" <now>."), unit("d", 1, "pain doctor")};
  corpus = annotate(corpus, AnnotationSource::builtin_lexicon());
  auto g = build_seedword(corpus, {"pain"}, 2, Scope::unit, 1);
  g = with_clusters(g, detect_communities(g).assignment);
  export_graph(g, GraphFormat::graphml, dir / "g.graphml");
  CHECK(read_graphml(dir / "g.graphml") == g);
  auto collapsed = collapse_clusters(g, detect_communities(g).assignment);
  CHECK(from_graphml(to_graphml(collapsed)) == collapsed);
  export_graph(g, GraphFormat::dot, dir / "g.dot");
  export_graph(g, GraphFormat::edge_list_csv, dir / "g.csv");
  CHECK(csv::read_table_file(dir / "g.csv").rows.size() == g.edges.size());
}
