#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ethnocode/csv.hpp"
#include "ethnocode/embeddings.hpp"
#include "ethnocode/error.hpp"
#include "ethnocode/textprep.hpp"
#include "ethnocode/util.hpp"

namespace ethnocode {

enum class Scope { sentence, unit, document };

constexpr std::string_view to_string(Scope s) {
  constexpr std::string_view names[] = {"sentence", "unit", "document"};
  return names[static_cast<int>(s)];
}

inline std::optional<Scope> parse_scope(std::string_view s) {
  for (int i = 0; i < 3; ++i)
    if (to_string(static_cast<Scope>(i)) == s) return static_cast<Scope>(i);
  return std::nullopt;
}

enum class FilterKind { all, nouns_adjectives, verbs_adverbs, entities_only, custom };

struct TokenFilter {
  FilterKind kind = FilterKind::all;
  /// stems kept under FilterKind::custom
  std::set<std::string> words;

  static TokenFilter parse(std::string_view name) {
    if (name == "all") return {FilterKind::all, {}};
    if (name == "nouns_adjectives") return {FilterKind::nouns_adjectives, {}};
    if (name == "verbs_adverbs") return {FilterKind::verbs_adverbs, {}};
    if (name == "entities_only") return {FilterKind::entities_only, {}};
    throw Error(ErrorKind::InvalidArgument, "unknown token filter: " + std::string(name));
  }

  bool keep(const Token& t) const {
    switch (kind) {
      case FilterKind::all: return true;
      case FilterKind::nouns_adjectives: return t.pos == Pos::NOUN || t.pos == Pos::ADJ;
      case FilterKind::verbs_adverbs: return t.pos == Pos::VERB || t.pos == Pos::ADV;
      case FilterKind::entities_only: return t.entity != Entity::NONE;
      case FilterKind::custom: return words.count(t.stem) > 0;
    }
    return false;
  }
};

struct NodeInfo {
  std::size_t frequency = 0;
  Pos pos = Pos::UNK;
  Entity entity = Entity::NONE;
  std::optional<std::size_t> cluster;
  /// set on collapsed graphs: total weight of edges inside the cluster
  std::size_t intra_weight = 0;

  bool operator==(const NodeInfo&) const = default;
};

struct GraphDesign {
  /// "cooccurrence", "seedword", "collapsed" or "" for hand-built graphs
  std::string kind;
  Scope scope = Scope::unit;
  std::vector<std::string> seeds;
  std::size_t rounds = 0;
  double threshold = 0;
  std::vector<std::size_t> admitted_per_round;

  bool operator==(const GraphDesign&) const = default;
};

/// Undirected weighted graph keyed by word. Edge keys are ordered pairs
/// with first < second.
struct SemanticGraph {
  std::map<std::string, NodeInfo> nodes;
  std::map<std::pair<std::string, std::string>, std::size_t> edges;
  GraphDesign design;

  static std::pair<std::string, std::string> key(const std::string& a, const std::string& b) {
    return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
  }

  void add_edge(const std::string& a, const std::string& b, std::size_t w = 1) {
    if (a == b) throw Error(ErrorKind::InvalidArgument, "self-loop on " + a);
    if (w == 0) return;
    nodes.try_emplace(a);
    nodes.try_emplace(b);
    edges[key(a, b)] += w;
  }

  std::size_t weight(const std::string& a, const std::string& b) const {
    auto it = edges.find(key(a, b));
    return it == edges.end() ? 0 : it->second;
  }

  std::size_t total_weight() const {
    std::size_t s = 0;
    for (const auto& [k, w] : edges) s += w;
    return s;
  }

  std::map<std::string, std::size_t> strengths() const {
    std::map<std::string, std::size_t> s;
    for (const auto& [n, info] : nodes) s[n] = 0;
    for (const auto& [k, w] : edges) {
      s[k.first] += w;
      s[k.second] += w;
    }
    return s;
  }

  bool operator==(const SemanticGraph&) const = default;
};

// ------------------------------------------------------------ building

namespace detail {

template <class E, std::size_t N>
E majority(const std::array<std::size_t, N>& counts) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < N; ++i)
    if (counts[i] > counts[best]) best = i;
  return static_cast<E>(best);
}

struct ScopedCorpus {
  /// surviving stems per scope instance
  std::vector<std::set<std::string>> instances;
  std::map<std::string, NodeInfo> nodes;
};

inline ScopedCorpus scope_instances(const TokenizedCorpus& corpus, Scope scope, const TokenFilter& filter) {
  ScopedCorpus out;
  std::map<std::string, std::array<std::size_t, 8>> pos_counts;
  std::map<std::string, std::array<std::size_t, 7>> entity_counts;
  std::map<std::string, std::size_t> doc_slot;
  for (const auto& u : corpus) {
    std::size_t unit_slot = out.instances.size();
    if (scope == Scope::unit) out.instances.emplace_back();
    if (scope == Scope::document) {
      auto [it, fresh] = doc_slot.try_emplace(u.key.doc_id, out.instances.size());
      if (fresh) out.instances.emplace_back();
      unit_slot = it->second;
    }
    std::size_t current_sentence = SIZE_MAX;
    for (const auto& t : u.tokens) {
      if (scope == Scope::sentence && t.sentence != current_sentence) {
        current_sentence = t.sentence;
        unit_slot = out.instances.size();
        out.instances.emplace_back();
      }
      if (!filter.keep(t) || t.stem.empty()) continue;
      out.instances[unit_slot].insert(t.stem);
      ++out.nodes[t.stem].frequency;
      ++pos_counts[t.stem][static_cast<std::size_t>(t.pos)];
      ++entity_counts[t.stem][static_cast<std::size_t>(t.entity)];
    }
  }
  for (auto& [w, info] : out.nodes) {
    info.pos = majority<Pos>(pos_counts[w]);
    auto ents = entity_counts[w];
    ents[static_cast<std::size_t>(Entity::NONE)] = 0;
    const bool any = std::any_of(ents.begin(), ents.end(), [](std::size_t c) { return c > 0; });
    info.entity = any ? majority<Entity>(ents) : Entity::NONE;
  }
  return out;
}

inline std::map<std::pair<std::string, std::string>, std::size_t> pair_counts(
    const std::vector<std::set<std::string>>& instances) {
  std::map<std::pair<std::string, std::string>, std::size_t> counts;
  for (const auto& inst : instances)
    for (auto a = inst.begin(); a != inst.end(); ++a)
      for (auto b = std::next(a); b != inst.end(); ++b) ++counts[{*a, *b}];
  return counts;
}

}  // namespace detail

/// Every unordered pair of distinct surviving stems gains one unit of
/// weight per scope instance in which both occur.
inline SemanticGraph build_cooccurrence(const TokenizedCorpus& corpus, Scope scope,
                                        const TokenFilter& filter = {}) {
  auto scoped = detail::scope_instances(corpus, scope, filter);
  SemanticGraph g;
  g.nodes = std::move(scoped.nodes);
  g.edges = detail::pair_counts(scoped.instances);
  g.design.kind = "cooccurrence";
  g.design.scope = scope;
  return g;
}

/// Grows a network outward from seed stems. Round 1 admits the seeds and
/// every word co-occurring with a seed at least `threshold` times; each
/// later round expands from the words admitted in the round before. Edges
/// are those among admitted words with weight >= threshold.
inline SemanticGraph build_seedword(const TokenizedCorpus& corpus, const std::vector<std::string>& seeds,
                                    std::size_t rounds, Scope scope, double threshold,
                                    const TokenFilter& filter = {}) {
  if (rounds < 1) throw Error(ErrorKind::InvalidArgument, "rounds must be >= 1");
  if (seeds.empty()) throw Error(ErrorKind::InvalidArgument, "no seeds given");
  auto full = build_cooccurrence(corpus, scope, filter);

  std::map<std::string, std::vector<std::pair<std::string, std::size_t>>> adjacency;
  for (const auto& [k, w] : full.edges) {
    adjacency[k.first].emplace_back(k.second, w);
    adjacency[k.second].emplace_back(k.first, w);
  }
  std::set<std::string> admitted, frontier;
  for (const auto& s : seeds) {
    const auto st = stem(s);
    if (full.nodes.count(st)) frontier.insert(st);
  }
  if (frontier.empty()) throw Error(ErrorKind::SeedsAbsent, "none of the seeds occur in the corpus");
  admitted = frontier;

  SemanticGraph g;
  g.design.kind = "seedword";
  g.design.scope = scope;
  g.design.rounds = rounds;
  g.design.threshold = threshold;
  for (const auto& s : seeds) g.design.seeds.push_back(stem(s));
  for (std::size_t r = 0; r < rounds; ++r) {
    std::set<std::string> next;
    for (const auto& f : frontier)
      for (const auto& [other, w] : adjacency[f])
        if (static_cast<double>(w) >= threshold && !admitted.count(other)) next.insert(other);
    g.design.admitted_per_round.push_back(r == 0 ? frontier.size() + next.size() : next.size());
    admitted.insert(next.begin(), next.end());
    frontier = std::move(next);
  }
  for (const auto& w : admitted) g.nodes[w] = full.nodes.at(w);
  for (const auto& [k, w] : full.edges)
    if (admitted.count(k.first) && admitted.count(k.second) && static_cast<double>(w) >= threshold) g.edges[k] = w;
  return g;
}

struct SeedEntry {
  std::string word;
  bool original = false;

  bool operator==(const SeedEntry&) const = default;
};

/// Seeds followed by the top-n cosine neighbors of each in-vocabulary seed.
inline std::vector<SeedEntry> expand_seeds(const std::vector<std::string>& seeds, const WordVectors& vectors,
                                           std::size_t n_per_seed) {
  std::vector<SeedEntry> out;
  std::set<std::string> seen;
  bool any = false;
  for (const auto& s : seeds) {
    any = any || vectors.find(s).has_value();
    if (seen.insert(s).second) out.push_back({s, true});
  }
  if (!any) throw Error(ErrorKind::NotFound, "no seed is in the vector vocabulary");
  for (const auto& s : seeds) {
    if (!vectors.find(s) || n_per_seed == 0) continue;
    for (const auto& [w, sim] : neighbors(vectors, s, n_per_seed))
      if (seen.insert(w).second) out.push_back({w, false});
  }
  return out;
}

// ------------------------------------------------------------- pruning

enum class PruneKind { min_weight, top_k_edges, top_k_nodes_by_strength };

struct PrunePolicy {
  PruneKind kind = PruneKind::min_weight;
  double value = 1;

  static PrunePolicy min_weight(double w) { return {PruneKind::min_weight, w}; }
  static PrunePolicy top_k_edges(std::size_t k) { return {PruneKind::top_k_edges, static_cast<double>(k)}; }
  static PrunePolicy top_k_nodes_by_strength(std::size_t k) {
    return {PruneKind::top_k_nodes_by_strength, static_cast<double>(k)};
  }
};

/// Applies the policy, then drops nodes left without edges.
inline SemanticGraph prune(const SemanticGraph& g, const PrunePolicy& policy) {
  if (!(policy.value > 0)) throw Error(ErrorKind::InvalidArgument, "prune parameter must be positive");
  SemanticGraph out;
  out.design = g.design;
  switch (policy.kind) {
    case PruneKind::min_weight:
      for (const auto& [k, w] : g.edges)
        if (static_cast<double>(w) >= policy.value) out.edges.emplace(k, w);
      break;
    case PruneKind::top_k_edges: {
      std::vector<std::pair<std::pair<std::string, std::string>, std::size_t>> all(g.edges.begin(), g.edges.end());
      std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
      const auto k = static_cast<std::size_t>(policy.value);
      for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.edges.insert(all[i]);
      break;
    }
    case PruneKind::top_k_nodes_by_strength: {
      auto s = g.strengths();
      std::vector<std::pair<std::string, std::size_t>> order(s.begin(), s.end());
      std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
      std::set<std::string> keep;
      const auto k = static_cast<std::size_t>(policy.value);
      for (std::size_t i = 0; i < std::min(k, order.size()); ++i) keep.insert(order[i].first);
      for (const auto& [e, w] : g.edges)
        if (keep.count(e.first) && keep.count(e.second)) out.edges.emplace(e, w);
      break;
    }
  }
  for (const auto& [k, w] : out.edges) {
    out.nodes[k.first] = g.nodes.at(k.first);
    out.nodes[k.second] = g.nodes.at(k.second);
  }
  return out;
}

// ---------------------------------------------------------- communities

/// Newman modularity of a partition given as node -> community.
inline double modularity(const SemanticGraph& g, const std::map<std::string, std::size_t>& community) {
  const double m = static_cast<double>(g.total_weight());
  if (m == 0) return 0.0;
  std::map<std::size_t, double> internal, degree;
  for (const auto& [k, w] : g.edges) {
    const auto ca = community.at(k.first), cb = community.at(k.second);
    if (ca == cb) internal[ca] += static_cast<double>(w);
    degree[ca] += static_cast<double>(w);
    degree[cb] += static_cast<double>(w);
  }
  double q = 0;
  for (const auto& [c, d] : degree) {
    const double in = internal.count(c) ? internal[c] : 0.0;
    q += in / m - (d / (2 * m)) * (d / (2 * m));
  }
  return q;
}

struct Communities {
  std::map<std::string, std::size_t> assignment;
  std::size_t count = 0;
  double modularity = 0;
};

namespace detail {

struct LevelGraph {
  std::size_t n = 0;
  /// symmetric adjacency; a self-loop entry holds twice the internal weight
  std::vector<std::map<std::size_t, double>> adj;
  std::vector<double> degree;
};

// Local-moving phase; returns true if any node changed community.
inline bool louvain_move(const LevelGraph& g, double m2, std::vector<std::size_t>& comm) {
  std::vector<double> tot(g.n, 0.0);
  for (std::size_t i = 0; i < g.n; ++i) tot[comm[i]] += g.degree[i];
  bool any = false;
  for (bool moved = true; moved;) {
    moved = false;
    for (std::size_t i = 0; i < g.n; ++i) {
      const std::size_t own = comm[i];
      std::map<std::size_t, double> links;
      for (const auto& [j, w] : g.adj[i])
        if (j != i) links[comm[j]] += w;
      tot[own] -= g.degree[i];
      auto gain = [&](std::size_t c) {
        const double kin = links.count(c) ? links[c] : 0.0;
        return kin - tot[c] * g.degree[i] / m2;
      };
      std::size_t best = own;
      double best_gain = gain(own);
      for (const auto& [c, w] : links) {
        const double gc = gain(c);
        if (gc > best_gain + 1e-12) {
          best = c;
          best_gain = gc;
        }
      }
      tot[best] += g.degree[i];
      if (best != own) {
        comm[i] = best;
        moved = any = true;
      }
    }
  }
  return any;
}

}  // namespace detail

/// Weighted Louvain modularity optimization. Nodes are visited in
/// lexicographic order, so the result is deterministic. Community ids are
/// numbered by their smallest member word.
inline Communities detect_communities(const SemanticGraph& g) {
  if (g.nodes.empty()) throw Error(ErrorKind::InvalidArgument, "graph has no nodes");
  std::vector<std::string> names;
  std::map<std::string, std::size_t> index;
  for (const auto& [n, info] : g.nodes) {
    index[n] = names.size();
    names.push_back(n);
  }
  detail::LevelGraph level;
  level.n = names.size();
  level.adj.resize(level.n);
  level.degree.assign(level.n, 0.0);
  double m2 = 0;
  for (const auto& [k, w] : g.edges) {
    const auto a = index.at(k.first), b = index.at(k.second);
    level.adj[a][b] += static_cast<double>(w);
    level.adj[b][a] += static_cast<double>(w);
    level.degree[a] += static_cast<double>(w);
    level.degree[b] += static_cast<double>(w);
    m2 += 2.0 * static_cast<double>(w);
  }
  // membership of each original node in the current level's nodes
  std::vector<std::size_t> membership(level.n);
  for (std::size_t i = 0; i < level.n; ++i) membership[i] = i;

  while (m2 > 0) {
    std::vector<std::size_t> comm(level.n);
    for (std::size_t i = 0; i < level.n; ++i) comm[i] = i;
    if (!detail::louvain_move(level, m2, comm)) break;
    // relabel communities densely in order of first appearance
    std::map<std::size_t, std::size_t> relabel;
    for (auto c : comm) relabel.emplace(c, relabel.size());
    for (auto& c : comm) c = relabel.at(c);
    detail::LevelGraph next;
    next.n = relabel.size();
    next.adj.resize(next.n);
    next.degree.assign(next.n, 0.0);
    for (std::size_t i = 0; i < level.n; ++i) {
      next.degree[comm[i]] += level.degree[i];
      for (const auto& [j, w] : level.adj[i]) next.adj[comm[i]][comm[j]] += w;
    }
    for (auto& m : membership) m = comm[m];
    level = std::move(next);
  }

  Communities out;
  std::map<std::size_t, std::size_t> renumber;
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto [it, fresh] = renumber.emplace(membership[i], renumber.size());
    out.assignment[names[i]] = it->second;
  }
  out.count = renumber.size();
  out.modularity = modularity(g, out.assignment);
  return out;
}

inline SemanticGraph with_clusters(SemanticGraph g, const std::map<std::string, std::size_t>& clusters) {
  for (auto& [n, info] : g.nodes) {
    auto it = clusters.find(n);
    if (it == clusters.end()) throw Error(ErrorKind::InvalidPartition, "node without a cluster: " + n);
    info.cluster = it->second;
  }
  return g;
}

inline std::string cluster_node_name(std::size_t c) { return "cluster_" + std::to_string(c); }

/// One node per cluster; crossing weights are summed onto cluster edges and
/// internal weight is kept as a node attribute.
inline SemanticGraph collapse_clusters(const SemanticGraph& g, const std::map<std::string, std::size_t>& clusters) {
  for (const auto& [n, c] : clusters)
    if (!g.nodes.count(n)) throw Error(ErrorKind::InvalidPartition, "cluster member not in graph: " + n);
  SemanticGraph out;
  out.design = g.design;
  out.design.kind = "collapsed";
  for (const auto& [n, info] : g.nodes) {
    auto it = clusters.find(n);
    if (it == clusters.end()) throw Error(ErrorKind::InvalidPartition, "node without a cluster: " + n);
    auto& node = out.nodes[cluster_node_name(it->second)];
    node.frequency += info.frequency;
    node.cluster = it->second;
  }
  for (const auto& [k, w] : g.edges) {
    const auto ca = clusters.at(k.first), cb = clusters.at(k.second);
    if (ca == cb)
      out.nodes[cluster_node_name(ca)].intra_weight += w;
    else
      out.add_edge(cluster_node_name(ca), cluster_node_name(cb), w);
  }
  return out;
}

// --------------------------------------------------------------- export

inline Table edge_list_table(const SemanticGraph& g) {
  Table t;
  t.header = {"source", "target", "weight"};
  for (const auto& [k, w] : g.edges) t.rows.push_back({k.first, k.second, std::to_string(w)});
  return t;
}

namespace detail {

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string xml_unescape(std::string_view s) {
  static const std::pair<std::string_view, char> entities[] = {
      {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&apos;", '\''}};
  std::string out;
  for (std::size_t i = 0; i < s.size();) {
    bool matched = false;
    if (s[i] == '&')
      for (const auto& [ent, c] : entities)
        if (s.substr(i, ent.size()) == ent) {
          out += c;
          i += ent.size();
          matched = true;
          break;
        }
    if (!matched) out += s[i++];
  }
  return out;
}

inline std::string join_numbers(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
  return s;
}

}  // namespace detail

inline std::string to_graphml(const SemanticGraph& g) {
  using detail::xml_escape;
  std::string s =
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n"
      "  <key id=\"design\" for=\"graph\" attr.name=\"design\" attr.type=\"string\"/>\n"
      "  <key id=\"scope\" for=\"graph\" attr.name=\"scope\" attr.type=\"string\"/>\n"
      "  <key id=\"seeds\" for=\"graph\" attr.name=\"seeds\" attr.type=\"string\"/>\n"
      "  <key id=\"rounds\" for=\"graph\" attr.name=\"rounds\" attr.type=\"int\"/>\n"
      "  <key id=\"threshold\" for=\"graph\" attr.name=\"threshold\" attr.type=\"double\"/>\n"
      "  <key id=\"admitted\" for=\"graph\" attr.name=\"admitted_per_round\" attr.type=\"string\"/>\n"
      "  <key id=\"frequency\" for=\"node\" attr.name=\"frequency\" attr.type=\"int\"/>\n"
      "  <key id=\"pos\" for=\"node\" attr.name=\"pos\" attr.type=\"string\"/>\n"
      "  <key id=\"entity\" for=\"node\" attr.name=\"entity\" attr.type=\"string\"/>\n"
      "  <key id=\"cluster\" for=\"node\" attr.name=\"cluster\" attr.type=\"int\"/>\n"
      "  <key id=\"intra_weight\" for=\"node\" attr.name=\"intra_weight\" attr.type=\"int\"/>\n"
      "  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"int\"/>\n"
      "  <graph id=\"G\" edgedefault=\"undirected\">\n";
  auto data = [](const std::string& key, const std::string& value) {
    return "<data key=\"" + key + "\">" + xml_escape(value) + "</data>";
  };
  std::string seeds;
  for (std::size_t i = 0; i < g.design.seeds.size(); ++i) seeds += (i ? " " : "") + g.design.seeds[i];
  s += "    " + data("design", g.design.kind) + "\n";
  s += "    " + data("scope", std::string(to_string(g.design.scope))) + "\n";
  s += "    " + data("seeds", seeds) + "\n";
  s += "    " + data("rounds", std::to_string(g.design.rounds)) + "\n";
  s += "    " + data("threshold", util::format_double(g.design.threshold)) + "\n";
  s += "    " + data("admitted", detail::join_numbers(g.design.admitted_per_round)) + "\n";
  for (const auto& [n, info] : g.nodes) {
    s += "    <node id=\"" + xml_escape(n) + "\">" + data("frequency", std::to_string(info.frequency)) +
         data("pos", std::string(to_string(info.pos))) + data("entity", std::string(to_string(info.entity)));
    if (info.cluster) s += data("cluster", std::to_string(*info.cluster));
    if (info.intra_weight) s += data("intra_weight", std::to_string(info.intra_weight));
    s += "</node>\n";
  }
  for (const auto& [k, w] : g.edges)
    s += "    <edge source=\"" + xml_escape(k.first) + "\" target=\"" + xml_escape(k.second) + "\">" +
         data("weight", std::to_string(w)) + "</edge>\n";
  s += "  </graph>\n</graphml>\n";
  return s;
}

/// Reads documents produced by to_graphml.
inline SemanticGraph from_graphml(std::string_view xml) {
  SemanticGraph g;
  auto attr = [](std::string_view tag, std::string_view name) -> std::string {
    const std::string needle = std::string(name) + "=\"";
    auto p = tag.find(needle);
    if (p == std::string_view::npos) throw Error(ErrorKind::FormatError, "missing attribute " + std::string(name));
    p += needle.size();
    auto e = tag.find('"', p);
    return detail::xml_unescape(tag.substr(p, e - p));
  };
  auto data_items = [](std::string_view body) {
    std::vector<std::pair<std::string, std::string>> items;
    for (std::size_t p = 0; (p = body.find("<data key=\"", p)) != std::string_view::npos;) {
      p += 11;
      auto q = body.find('"', p);
      auto key = std::string(body.substr(p, q - p));
      auto start = body.find('>', q) + 1;
      auto end = body.find("</data>", start);
      if (end == std::string_view::npos) throw Error(ErrorKind::FormatError, "unterminated data element");
      items.emplace_back(key, detail::xml_unescape(body.substr(start, end - start)));
      p = end;
    }
    return items;
  };
  auto num = [](const std::string& v) {
    auto n = util::parse_int(v);
    if (!n || *n < 0) throw Error(ErrorKind::FormatError, "bad number " + v);
    return static_cast<std::size_t>(*n);
  };
  auto graph_start = xml.find("<graph ");
  if (graph_start == std::string_view::npos) throw Error(ErrorKind::FormatError, "no graph element");
  auto first_child = xml.find("<node ", graph_start);
  auto first_edge = xml.find("<edge ", graph_start);
  auto header_end = std::min({first_child, first_edge, xml.find("</graph>", graph_start)});
  for (auto& [k, v] : data_items(xml.substr(graph_start, header_end - graph_start))) {
    if (k == "design") g.design.kind = v;
    else if (k == "scope") g.design.scope = parse_scope(v).value_or(Scope::unit);
    else if (k == "seeds") g.design.seeds = util::split_ws(v);
    else if (k == "rounds") g.design.rounds = num(v);
    else if (k == "threshold") g.design.threshold = util::parse_double(v).value_or(0.0);
    else if (k == "admitted")
      for (auto& x : util::split_ws(v)) g.design.admitted_per_round.push_back(num(x));
  }
  for (std::size_t p = graph_start; (p = xml.find("<node ", p)) != std::string_view::npos;) {
    auto tag_end = xml.find('>', p);
    auto close = xml.find("</node>", tag_end);
    const bool self_closing = xml[tag_end - 1] == '/';
    auto id = attr(xml.substr(p, tag_end - p), "id");
    auto& info = g.nodes[id];
    if (!self_closing)
      for (auto& [k, v] : data_items(xml.substr(tag_end, close - tag_end))) {
        if (k == "frequency") info.frequency = num(v);
        else if (k == "pos") info.pos = parse_pos(v).value_or(Pos::UNK);
        else if (k == "entity") info.entity = parse_entity(v).value_or(Entity::NONE);
        else if (k == "cluster") info.cluster = num(v);
        else if (k == "intra_weight") info.intra_weight = num(v);
      }
    p = tag_end;
  }
  for (std::size_t p = graph_start; (p = xml.find("<edge ", p)) != std::string_view::npos;) {
    auto tag_end = xml.find('>', p);
    auto tag = xml.substr(p, tag_end - p);
    std::size_t w = 1;
    if (xml[tag_end - 1] != '/') {
      auto close = xml.find("</edge>", tag_end);
      for (auto& [k, v] : data_items(xml.substr(tag_end, close - tag_end)))
        if (k == "weight") w = num(v);
    }
    const auto a = attr(tag, "source"), b = attr(tag, "target");
    if (!g.nodes.count(a) || !g.nodes.count(b)) throw Error(ErrorKind::FormatError, "edge to unknown node");
    g.add_edge(a, b, w);
    p = tag_end;
  }
  return g;
}

inline std::string to_dot(const SemanticGraph& g) {
  auto quote = [](const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
      if (c == '"' || c == '\\') out += '\\';
      out += c;
    }
    return out + "\"";
  };
  std::string s = "graph G {\n";
  for (const auto& [n, info] : g.nodes) {
    s += "  " + quote(n) + " [frequency=" + std::to_string(info.frequency);
    if (info.cluster) s += ", cluster=" + std::to_string(*info.cluster);
    s += "];\n";
  }
  for (const auto& [k, w] : g.edges)
    s += "  " + quote(k.first) + " -- " + quote(k.second) + " [weight=" + std::to_string(w) + "];\n";
  s += "}\n";
  return s;
}

enum class GraphFormat { edge_list_csv, graphml, dot };

inline void export_graph(const SemanticGraph& g, GraphFormat format, const std::filesystem::path& path) {
  switch (format) {
    case GraphFormat::edge_list_csv: csv::write_table_file(path, edge_list_table(g)); break;
    case GraphFormat::graphml: util::write_file(path, to_graphml(g)); break;
    case GraphFormat::dot: util::write_file(path, to_dot(g)); break;
  }
}

inline SemanticGraph read_graphml(const std::filesystem::path& path) { return from_graphml(util::read_file(path)); }

}  // namespace ethnocode
