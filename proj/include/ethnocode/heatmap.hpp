#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ethnocode/corpus.hpp"
#include "ethnocode/csv.hpp"
#include "ethnocode/error.hpp"
#include "ethnocode/linalg.hpp"
#include "ethnocode/topics.hpp"
#include "ethnocode/util.hpp"

namespace ethnocode {

enum class CellMode { binary, count, proportion };

inline std::optional<CellMode> parse_cell_mode(std::string_view s) {
  if (s == "binary") return CellMode::binary;
  if (s == "count") return CellMode::count;
  if (s == "proportion") return CellMode::proportion;
  return std::nullopt;
}

/// Attributes as rows, respondents as columns.
struct AttributeMatrix {
  std::vector<std::string> attributes;
  std::vector<std::string> respondents;
  Matrix values;
  CellMode mode = CellMode::count;

  double at(std::size_t attr, std::size_t resp) const { return values(attr, resp); }
};

/// Attribute names:
///   a code name from the codebook
///   "meta:Key" or "meta:Key=Value" for unit metadata
///   "topic:k" for units whose dominant topic is k (needs `topics`)
/// A respondent is a participant id; documents of the same participant
/// are merged.
inline AttributeMatrix build_matrix(const Corpus& corpus, const std::vector<std::string>& attributes, CellMode mode,
                                    const TopicModel* topics = nullptr) {
  AttributeMatrix m;
  m.mode = mode;
  m.attributes = attributes;
  std::set<std::string> respondent_set;
  for (const auto& [doc, meta] : corpus.documents()) respondent_set.insert(meta.participant_id);
  m.respondents.assign(respondent_set.begin(), respondent_set.end());
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < m.respondents.size(); ++i) col[m.respondents[i]] = i;

  std::map<std::string, std::size_t> dominant;
  if (topics)
    for (std::size_t d = 0; d < topics->documents.size(); ++d) dominant[topics->documents[d]] = topics->dominant_topic(d);

  using Pred = std::function<bool(const Unit&)>;
  std::vector<Pred> preds;
  for (const auto& a : attributes) {
    if (a.rfind("meta:", 0) == 0) {
      const auto spec = a.substr(5);
      const auto eq = spec.find('=');
      const auto key = spec.substr(0, eq);
      bool known = false;
      for (const auto& u : corpus.units()) known = known || u.extra_metadata.count(key);
      if (!known) throw Error(ErrorKind::NotFound, "unknown metadata key: " + key);
      if (eq == std::string::npos)
        preds.push_back([key](const Unit& u) {
          auto it = u.extra_metadata.find(key);
          return it != u.extra_metadata.end() && !it->second.empty();
        });
      else
        preds.push_back([key, value = spec.substr(eq + 1)](const Unit& u) {
          auto it = u.extra_metadata.find(key);
          return it != u.extra_metadata.end() && it->second == value;
        });
    } else if (a.rfind("topic:", 0) == 0) {
      auto k = util::parse_int(a.substr(6));
      if (!topics || !k || *k < 0 || static_cast<std::size_t>(*k) >= topics->topics)
        throw Error(ErrorKind::NotFound, "unknown topic attribute: " + a);
      preds.push_back([&dominant, k = static_cast<std::size_t>(*k)](const Unit& u) {
        auto it = dominant.find(u.key().to_string());
        return it != dominant.end() && it->second == k;
      });
    } else {
      if (!corpus.codebook().count(a)) throw Error(ErrorKind::NotFound, "unknown code: " + a);
      preds.push_back([a](const Unit& u) { return u.codes.count(a) > 0; });
    }
  }

  m.values = Matrix(attributes.size(), m.respondents.size());
  std::vector<double> units_per_respondent(m.respondents.size(), 0.0);
  for (const auto& u : corpus.units()) {
    const std::size_t c = col.at(corpus.documents().at(u.doc_id).participant_id);
    units_per_respondent[c] += 1;
    for (std::size_t r = 0; r < preds.size(); ++r)
      if (preds[r](u)) m.values(r, c) += 1;
  }
  for (std::size_t r = 0; r < m.values.rows; ++r)
    for (std::size_t c = 0; c < m.values.cols; ++c) {
      double& v = m.values(r, c);
      if (mode == CellMode::binary) v = v > 0 ? 1.0 : 0.0;
      if (mode == CellMode::proportion) v = units_per_respondent[c] > 0 ? v / units_per_respondent[c] : 0.0;
    }
  return m;
}

// ----------------------------------------------------------- clustering

enum class Axis { rows, columns };
enum class Linkage { single, complete, average };
enum class Metric { euclidean, jaccard };

inline std::optional<Linkage> parse_linkage(std::string_view s) {
  if (s == "single") return Linkage::single;
  if (s == "complete") return Linkage::complete;
  if (s == "average") return Linkage::average;
  return std::nullopt;
}

inline std::optional<Metric> parse_metric(std::string_view s) {
  if (s == "euclidean") return Metric::euclidean;
  if (s == "jaccard") return Metric::jaccard;
  return std::nullopt;
}

inline Metric default_metric(CellMode mode) { return mode == CellMode::binary ? Metric::jaccard : Metric::euclidean; }

/// Jaccard distance generalized to non-negative weights:
/// 1 - sum(min) / sum(max). Two all-zero vectors are at distance 0.
inline double item_distance(const std::vector<double>& a, const std::vector<double>& b, Metric metric) {
  if (metric == Metric::euclidean) return std::sqrt(squared_distance(a.data(), b.data(), a.size()));
  double lo = 0, hi = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    lo += std::min(a[i], b[i]);
    hi += std::max(a[i], b[i]);
  }
  return hi == 0 ? 0.0 : 1.0 - lo / hi;
}

/// Merge i joins clusters `left` and `right`; ids below n are items, id
/// n + i is the cluster formed by merge i.
struct Merge {
  std::size_t left = 0;
  std::size_t right = 0;
  double height = 0;
  std::size_t size = 0;
};

struct Dendrogram {
  std::vector<std::string> labels;
  std::vector<Merge> merges;
  std::vector<std::size_t> leaf_order;
};

inline std::vector<std::vector<double>> axis_items(const AttributeMatrix& m, Axis axis) {
  std::vector<std::vector<double>> items;
  if (axis == Axis::rows) {
    for (std::size_t r = 0; r < m.values.rows; ++r) items.emplace_back(m.values.row(r), m.values.row(r) + m.values.cols);
  } else {
    for (std::size_t c = 0; c < m.values.cols; ++c) {
      std::vector<double> v;
      for (std::size_t r = 0; r < m.values.rows; ++r) v.push_back(m.values(r, c));
      items.push_back(std::move(v));
    }
  }
  return items;
}

/// Agglomerative clustering with Lance-Williams updates. Among equally
/// close pairs, the one whose smallest member labels sort first merges.
inline Dendrogram hier_cluster(const std::vector<std::vector<double>>& items, const std::vector<std::string>& labels,
                               Linkage linkage, Metric metric) {
  const std::size_t n = items.size();
  if (n < 2) throw Error(ErrorKind::TooFew, "need at least 2 items to cluster");
  if (labels.size() != n) throw Error(ErrorKind::InvalidArgument, "one label per item required");
  Dendrogram d;
  d.labels = labels;
  // active cluster -> (id, size, smallest label)
  struct Active {
    std::size_t id;
    std::size_t size;
    std::string key;
    std::vector<std::size_t> leaves;
  };
  std::vector<Active> active;
  for (std::size_t i = 0; i < n; ++i) active.push_back({i, 1, labels[i], {i}});
  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) dist[i][j] = dist[j][i] = item_distance(items[i], items[j], metric);

  while (active.size() > 1) {
    std::size_t bi = 0, bj = 1;
    auto order_key = [&](std::size_t i, std::size_t j) {
      const auto& a = active[i].key;
      const auto& b = active[j].key;
      return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
    };
    for (std::size_t i = 0; i < active.size(); ++i)
      for (std::size_t j = i + 1; j < active.size(); ++j) {
        // distances within rounding noise count as tied
        const double tol = 1e-12 * std::max(1.0, std::abs(dist[bi][bj]));
        const bool tied = std::abs(dist[i][j] - dist[bi][bj]) <= tol;
        if ((!tied && dist[i][j] < dist[bi][bj]) || (tied && order_key(i, j) < order_key(bi, bj))) {
          bi = i;
          bj = j;
        }
      }
    if (active[bj].key < active[bi].key) std::swap(bi, bj);
    const double h = dist[bi][bj];
    Active merged{n + d.merges.size(), active[bi].size + active[bj].size, std::min(active[bi].key, active[bj].key), {}};
    merged.leaves = active[bi].leaves;
    merged.leaves.insert(merged.leaves.end(), active[bj].leaves.begin(), active[bj].leaves.end());
    d.merges.push_back({active[bi].id, active[bj].id, h, merged.size});

    std::vector<double> row(active.size(), 0.0);
    const double na = static_cast<double>(active[bi].size), nb = static_cast<double>(active[bj].size);
    for (std::size_t k = 0; k < active.size(); ++k) {
      if (k == bi || k == bj) continue;
      const double dak = dist[bi][k], dbk = dist[bj][k];
      switch (linkage) {
        case Linkage::single: row[k] = std::min(dak, dbk); break;
        case Linkage::complete: row[k] = std::max(dak, dbk); break;
        case Linkage::average: row[k] = (na * dak + nb * dbk) / (na + nb); break;
      }
    }
    // replace bi by the merged cluster, drop bj
    active[bi] = std::move(merged);
    for (std::size_t k = 0; k < active.size(); ++k) {
      if (k == bi || k == bj) continue;
      dist[bi][k] = dist[k][bi] = row[k];
    }
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(bj));
    dist.erase(dist.begin() + static_cast<std::ptrdiff_t>(bj));
    for (auto& r : dist) r.erase(r.begin() + static_cast<std::ptrdiff_t>(bj));
  }
  d.leaf_order = active[0].leaves;
  return d;
}

inline Dendrogram hier_cluster(const AttributeMatrix& m, Axis axis, Linkage linkage, Metric metric) {
  return hier_cluster(axis_items(m, axis), axis == Axis::rows ? m.attributes : m.respondents, linkage, metric);
}

/// Flat clusters from undoing the last k - 1 merges; cluster ids follow the
/// dendrogram leaf order.
inline std::vector<std::size_t> cut_tree(const Dendrogram& d, std::size_t k) {
  const std::size_t n = d.labels.size();
  if (k < 1 || k > n) throw Error(ErrorKind::InvalidK, "cut size must be in [1, items]");
  const std::size_t keep = n - k;
  // union the first `keep` merges
  std::vector<std::size_t> parent(n + d.merges.size());
  for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = i;
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    return parent[x] == x ? x : parent[x] = find(parent[x]);
  };
  for (std::size_t i = 0; i < keep; ++i) {
    parent[find(d.merges[i].left)] = n + i;
    parent[find(d.merges[i].right)] = n + i;
  }
  std::map<std::size_t, std::size_t> ids;
  std::vector<std::size_t> out(n);
  for (auto leaf : d.leaf_order) {
    auto [it, fresh] = ids.emplace(find(leaf), ids.size());
    out[leaf] = it->second;
  }
  return out;
}

inline nlohmann::json merge_tree_json(const Dendrogram& d) {
  const std::size_t n = d.labels.size();
  std::function<nlohmann::json(std::size_t)> node = [&](std::size_t id) -> nlohmann::json {
    if (id < n) return {{"name", d.labels[id]}};
    const auto& m = d.merges[id - n];
    return {{"height", m.height}, {"size", m.size}, {"children", {node(m.left), node(m.right)}}};
  };
  if (d.merges.empty()) return n == 1 ? node(0) : nlohmann::json::object();
  return node(n + d.merges.size() - 1);
}

// ------------------------------------------------------------ rendering

enum class Palette { blues, greys, reds };

inline std::optional<Palette> parse_palette(std::string_view s) {
  if (s == "blues") return Palette::blues;
  if (s == "greys") return Palette::greys;
  if (s == "reds") return Palette::reds;
  return std::nullopt;
}

namespace detail {

inline bool is_permutation_of(const std::vector<std::size_t>& order, std::size_t n) {
  if (order.size() != n) return false;
  std::vector<bool> seen(n, false);
  for (auto i : order) {
    if (i >= n || seen[i]) return false;
    seen[i] = true;
  }
  return true;
}

inline std::string colour(Palette p, double t) {
  t = std::clamp(t, 0.0, 1.0);
  struct Rgb {
    double r, g, b;
  };
  Rgb lo{247, 251, 255}, hi{8, 48, 107};
  if (p == Palette::greys) lo = {255, 255, 255}, hi = {37, 37, 37};
  if (p == Palette::reds) lo = {255, 245, 240}, hi = {103, 0, 13};
  auto mix = [t](double a, double b) { return static_cast<int>(std::lround(a + (b - a) * t)); };
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", mix(lo.r, hi.r), mix(lo.g, hi.g), mix(lo.b, hi.b));
  return buf;
}

inline std::string svg_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '"') out += "&quot;";
    else out += c;
  }
  return out;
}

}  // namespace detail

struct RenderedHeatmap {
  std::string svg;
  /// the reordered matrix
  Table table;
};

inline RenderedHeatmap render_heatmap(const AttributeMatrix& m, const std::vector<std::size_t>& row_order,
                                      const std::vector<std::size_t>& col_order, Palette palette = Palette::blues) {
  if (!detail::is_permutation_of(row_order, m.values.rows))
    throw Error(ErrorKind::InvalidOrder, "row order is not a permutation of the attributes");
  if (!detail::is_permutation_of(col_order, m.values.cols))
    throw Error(ErrorKind::InvalidOrder, "column order is not a permutation of the respondents");
  RenderedHeatmap out;
  out.table.header = {"attribute"};
  for (auto c : col_order) out.table.header.push_back(m.respondents[c]);
  for (auto r : row_order) {
    std::vector<std::string> row{m.attributes[r]};
    for (auto c : col_order) row.push_back(util::format_double(m.values(r, c)));
    out.table.rows.push_back(std::move(row));
  }

  double top = 0;
  for (double v : m.values.data) top = std::max(top, v);
  const int cell = 16, left = 160, head = 100;
  const int width = left + cell * static_cast<int>(col_order.size()) + 10;
  const int height = head + cell * static_cast<int>(row_order.size()) + 10;
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
                  std::to_string(height) + "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  for (std::size_t j = 0; j < col_order.size(); ++j) {
    const int x = left + cell * static_cast<int>(j) + cell / 2;
    s += "  <text transform=\"translate(" + std::to_string(x) + "," + std::to_string(head - 4) +
         ") rotate(-60)\">" + detail::svg_escape(m.respondents[col_order[j]]) + "</text>\n";
  }
  for (std::size_t i = 0; i < row_order.size(); ++i) {
    const int y = head + cell * static_cast<int>(i);
    s += "  <text x=\"" + std::to_string(left - 4) + "\" y=\"" + std::to_string(y + cell - 4) +
         "\" text-anchor=\"end\">" + detail::svg_escape(m.attributes[row_order[i]]) + "</text>\n";
    for (std::size_t j = 0; j < col_order.size(); ++j) {
      const double v = m.values(row_order[i], col_order[j]);
      s += "  <rect x=\"" + std::to_string(left + cell * static_cast<int>(j)) + "\" y=\"" + std::to_string(y) +
           "\" width=\"" + std::to_string(cell) + "\" height=\"" + std::to_string(cell) + "\" fill=\"" +
           detail::colour(palette, top > 0 ? v / top : 0.0) + "\"><title>" + util::format_double(v) +
           "</title></rect>\n";
    }
  }
  s += "</svg>\n";
  out.svg = std::move(s);
  return out;
}

inline AttributeMatrix matrix_from_table(const Table& t, CellMode mode = CellMode::count) {
  if (t.header.empty() || t.header[0] != "attribute")
    throw Error(ErrorKind::SchemaError, "matrix table must start with an 'attribute' column");
  AttributeMatrix m;
  m.mode = mode;
  m.respondents.assign(t.header.begin() + 1, t.header.end());
  m.values = Matrix(t.rows.size(), m.respondents.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    m.attributes.push_back(t.rows[r][0]);
    for (std::size_t c = 0; c < m.respondents.size(); ++c) {
      auto v = util::parse_double(t.rows[r][c + 1]);
      if (!v || *v < 0) throw Error(ErrorKind::FormatError, "bad matrix cell '" + t.rows[r][c + 1] + "'");
      m.values(r, c) = *v;
    }
  }
  return m;
}

inline std::vector<std::size_t> identity_order(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

inline Table matrix_table(const AttributeMatrix& m) {
  return render_heatmap(m, identity_order(m.values.rows), identity_order(m.values.cols)).table;
}

}  // namespace ethnocode
