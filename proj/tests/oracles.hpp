#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ethnocode/heatmap.hpp"
#include "ethnocode/rng.hpp"
#include "ethnocode/semnet.hpp"
#include "ethnocode/textprep.hpp"

namespace testsupport {

using namespace ethnocode;

// Coincidence matrix built pair by pair over arbitrary nominal values.
inline double alpha_oracle(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<int, int>, double> o;
  for (std::size_t u = 0; u < a.size(); ++u) {
    const int vals[2] = {a[u], b[u]};
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        if (i != j) o[{vals[i], vals[j]}] += 1.0;  // weight 1/(m_u - 1) with m_u = 2
  }
  std::map<int, double> marg;
  double n = 0;
  for (const auto& [cell, c] : o) {
    marg[cell.first] += c;
    n += c;
  }
  double d_o = 0, d_e = 0;
  for (const auto& [cell, c] : o)
    if (cell.first != cell.second) d_o += c;
  d_o /= n;
  for (const auto& [c, nc] : marg)
    for (const auto& [k, nk] : marg)
      if (c != k) d_e += nc * nk;
  d_e /= n * (n - 1);
  return 1.0 - d_o / d_e;
}

// 50 documents over {a,b,c} and 50 over {x,y,z}
inline std::vector<std::vector<std::string>> two_block_docs(std::uint64_t seed, std::vector<int>* block = nullptr) {
  Rng rng(seed);
  const std::vector<std::string> left{"a", "b", "c"}, right{"x", "y", "z"};
  std::vector<std::vector<std::string>> docs;
  for (int d = 0; d < 100; ++d) {
    const auto& words = d % 2 ? right : left;
    if (block) block->push_back(d % 2);
    std::vector<std::string> doc;
    for (int i = 0; i < 20; ++i) doc.push_back(words[rng.below(3)]);
    docs.push_back(doc);
  }
  return docs;
}

// p and q are only ever seen in the same contexts and never together.
inline std::vector<std::vector<std::string>> planted_synonym_corpus(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<std::string>> groups;
  for (int g = 0; g < 12; ++g) {
    std::vector<std::string> words;
    for (int i = 0; i < 6; ++i) words.push_back("c" + std::to_string(g) + "_" + std::to_string(i));
    groups.push_back(words);
  }
  std::vector<std::string> targets{"p", "q"};
  for (int t = 0; t < 10; ++t) targets.push_back("t" + std::to_string(t));
  std::vector<std::vector<std::string>> sentences;
  for (int s = 0; s < 3000; ++s) {
    const std::size_t ti = rng.below(targets.size());
    // p and q share group 0; t_i uses group i + 1
    const auto& g = groups[ti < 2 ? 0 : ti - 1];
    std::vector<std::string> sent;
    for (int i = 0; i < 2; ++i) sent.push_back(g[rng.below(g.size())]);
    sent.push_back(targets[ti]);
    for (int i = 0; i < 2; ++i) sent.push_back(g[rng.below(g.size())]);
    sentences.push_back(sent);
  }
  return sentences;
}

// Two 5-cliques {a..e} and {v..z}, joined by the edge e-v.
inline SemanticGraph two_cliques() {
  SemanticGraph g;
  const std::vector<std::string> left{"a", "b", "c", "d", "e"}, right{"v", "w", "x", "y", "z"};
  for (const auto* side : {&left, &right})
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = i + 1; j < 5; ++j) g.add_edge((*side)[i], (*side)[j]);
  g.add_edge("e", "v");
  return g;
}

// Quadratic oracle: counts every pair of positions, deduplicated per instance.
inline std::map<std::pair<std::string, std::string>, std::size_t> cooccurrence_oracle(const TokenizedCorpus& corpus,
                                                                                 Scope scope) {
  std::map<std::string, std::vector<std::string>> instances;
  for (const auto& u : corpus)
    for (const auto& t : u.tokens) {
      std::string id = u.key.doc_id;
      if (scope != Scope::document) id += "#" + std::to_string(u.key.reference);
      if (scope == Scope::sentence) id += "/" + std::to_string(t.sentence);
      instances[id].push_back(t.stem);
    }
  std::map<std::pair<std::string, std::string>, std::size_t> out;
  for (const auto& [id, stems] : instances) {
    std::set<std::pair<std::string, std::string>> seen;
    for (std::size_t i = 0; i < stems.size(); ++i)
      for (std::size_t j = 0; j < stems.size(); ++j)
        if (stems[i] < stems[j]) seen.insert({stems[i], stems[j]});
    for (const auto& p : seen) ++out[p];
  }
  return out;
}

// Brute-force agglomeration: recompute every cluster distance from item
// distances at every step.
inline std::vector<double> linkage_oracle(const std::vector<std::vector<double>>& items, Linkage linkage,
                                        Metric metric) {
  std::vector<std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < items.size(); ++i) clusters.push_back({i});
  auto linkage_distance = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0, sum = 0;
    for (auto i : a)
      for (auto j : b) {
        const double d = item_distance(items[i], items[j], metric);
        lo = std::min(lo, d);
        hi = std::max(hi, d);
        sum += d;
      }
    if (linkage == Linkage::single) return lo;
    if (linkage == Linkage::complete) return hi;
    return sum / static_cast<double>(a.size() * b.size());
  };
  std::vector<double> heights;
  while (clusters.size() > 1) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 1;
    for (std::size_t i = 0; i < clusters.size(); ++i)
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        const double d = linkage_distance(clusters[i], clusters[j]);
        if (std::isinf(best) || d < best - 1e-12 * std::max(1.0, std::abs(best))) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    heights.push_back(best);
    clusters[bi].insert(clusters[bi].end(), clusters[bj].begin(), clusters[bj].end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
  }
  return heights;
}

}  // namespace testsupport
