#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ethnocode/corpus.hpp"
#include "ethnocode/csv.hpp"
#include "ethnocode/error.hpp"
#include "ethnocode/linalg.hpp"
#include "ethnocode/rng.hpp"
#include "ethnocode/textprep.hpp"
#include "ethnocode/util.hpp"

namespace ethnocode {

enum class VectorSource { trained, loaded };

struct WordVectors {
  std::size_t dim = 0;
  std::vector<std::string> words;
  std::map<std::string, std::size_t> index;
  /// words.size() x dim
  Matrix matrix;
  VectorSource source = VectorSource::trained;
  std::string provenance;

  std::size_t size() const { return words.size(); }
  const double* row(std::size_t i) const { return matrix.row(i); }
  std::optional<std::size_t> find(const std::string& w) const {
    auto it = index.find(w);
    if (it == index.end()) return std::nullopt;
    return it->second;
  }

  static WordVectors from_rows(std::vector<std::string> words, Matrix m, VectorSource src) {
    if (words.size() != m.rows) throw Error(ErrorKind::InvalidArgument, "word count does not match matrix rows");
    WordVectors v;
    v.dim = m.cols;
    v.words = std::move(words);
    v.matrix = std::move(m);
    v.source = src;
    for (std::size_t i = 0; i < v.words.size(); ++i)
      if (!v.index.emplace(v.words[i], i).second) throw Error(ErrorKind::FormatError, "duplicate word " + v.words[i]);
    return v;
  }
};

// ------------------------------------------------------------------ SGNS

struct SgnsOptions {
  std::size_t dim = 100;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  double learning_rate = 0.025;
  std::uint64_t seed = 1;
  /// Frequent-word subsampling threshold; 0 disables it.
  double subsample = 0.0;
};

namespace detail {

inline double sigmoid(double x) {
  if (x > 30) return 1.0;
  if (x < -30) return 0.0;
  return 1.0 / (1.0 + std::exp(-x));
}

}  // namespace detail

/// Skip-gram with negative sampling over sentences of terms. Training is
/// single-threaded, so a seed fixes the result.
inline WordVectors train_sgns(const std::vector<std::vector<std::string>>& sentences, const SgnsOptions& opt) {
  if (opt.dim < 2) throw Error(ErrorKind::InvalidArgument, "dim must be >= 2");
  if (opt.window < 1) throw Error(ErrorKind::InvalidArgument, "window must be >= 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& s : sentences)
    for (const auto& w : s) ++counts[w];
  if (counts.size() < 2) throw Error(ErrorKind::InsufficientVocabulary, "need at least 2 distinct words");

  std::vector<std::string> words;
  std::map<std::string, std::size_t> index;
  std::vector<double> freq;
  double total = 0;
  for (const auto& [w, c] : counts) {
    index[w] = words.size();
    words.push_back(w);
    freq.push_back(static_cast<double>(c));
    total += static_cast<double>(c);
  }
  const std::size_t V = words.size(), D = opt.dim;

  std::vector<double> cumulative(V);
  {
    double acc = 0;
    for (std::size_t i = 0; i < V; ++i) cumulative[i] = acc += std::pow(freq[i], 0.75);
  }
  Rng rng(opt.seed);
  auto draw_negative = [&] {
    const double u = rng.uniform() * cumulative.back();
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), V - 1);
  };

  Matrix in(V, D), out(V, D);
  for (auto& x : in.data) x = (rng.uniform() - 0.5) / static_cast<double>(D);

  std::vector<std::vector<std::size_t>> ids;
  for (const auto& s : sentences) {
    std::vector<std::size_t> row;
    for (const auto& w : s) row.push_back(index.at(w));
    ids.push_back(std::move(row));
  }
  std::size_t corpus_tokens = static_cast<std::size_t>(total);
  const std::size_t total_steps = std::max<std::size_t>(1, opt.epochs * corpus_tokens);
  std::size_t step = 0;
  std::vector<double> grad(D);
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    for (const auto& sentence : ids) {
      std::vector<std::size_t> kept;
      for (auto w : sentence) {
        if (opt.subsample > 0) {
          const double f = freq[w] / total;
          const double keep = std::min(1.0, std::sqrt(opt.subsample / f) + opt.subsample / f);
          if (!rng.bernoulli(keep)) continue;
        }
        kept.push_back(w);
      }
      for (std::size_t i = 0; i < kept.size(); ++i, ++step) {
        const double lr =
            std::max(opt.learning_rate * 1e-4,
                     opt.learning_rate * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps)));
        const std::size_t reduced = rng.below(opt.window);
        const std::size_t span = opt.window - reduced;
        const std::size_t lo = i >= span ? i - span : 0;
        const std::size_t hi = std::min(kept.size() - 1, i + span);
        for (std::size_t j = lo; j <= hi; ++j) {
          if (j == i) continue;
          double* vin = in.row(kept[j]);
          std::fill(grad.begin(), grad.end(), 0.0);
          for (std::size_t n = 0; n <= opt.negatives; ++n) {
            std::size_t target;
            double label;
            if (n == 0) {
              target = kept[i];
              label = 1.0;
            } else {
              target = draw_negative();
              if (target == kept[i]) continue;
              label = 0.0;
            }
            double* vout = out.row(target);
            const double g = (label - detail::sigmoid(dot(vin, vout, D))) * lr;
            for (std::size_t d = 0; d < D; ++d) grad[d] += g * vout[d];
            for (std::size_t d = 0; d < D; ++d) vout[d] += g * vin[d];
          }
          for (std::size_t d = 0; d < D; ++d) vin[d] += grad[d];
        }
      }
    }
  }
  auto v = WordVectors::from_rows(std::move(words), std::move(in), VectorSource::trained);
  v.provenance = "sgns";
  return v;
}

/// Sentences of stems, split on the tokenizer's sentence boundaries.
inline std::vector<std::vector<std::string>> sentences_of(const TokenizedCorpus& corpus) {
  std::vector<std::vector<std::string>> out;
  for (const auto& u : corpus) {
    std::size_t current = SIZE_MAX;
    for (const auto& t : u.tokens) {
      if (t.sentence != current) {
        out.emplace_back();
        current = t.sentence;
      }
      out.back().push_back(t.stem);
    }
  }
  return out;
}

inline WordVectors train_sgns(const TokenizedCorpus& corpus, const SgnsOptions& opt) {
  return train_sgns(sentences_of(corpus), opt);
}

// ------------------------------------------------------------ vector files

namespace detail {

struct VectorHeader {
  std::size_t count = 0;
  std::size_t dim = 0;
  std::string provenance;
};

inline VectorHeader parse_vector_header(const std::string& line) {
  auto parts = util::split_ws(line);
  if (parts.size() < 2) throw Error(ErrorKind::FormatError, "vector file header must be '<count> <dim>'");
  auto count = util::parse_int(parts[0]);
  auto dim = util::parse_int(parts[1]);
  if (!count || !dim || *count < 0 || *dim < 1)
    throw Error(ErrorKind::FormatError, "vector file header must be '<count> <dim>'");
  VectorHeader h{static_cast<std::size_t>(*count), static_cast<std::size_t>(*dim), {}};
  for (std::size_t i = 2; i < parts.size(); ++i) h.provenance += (i > 2 ? " " : "") + parts[i];
  return h;
}

inline std::vector<std::string> content_lines(const std::string& text) {
  std::vector<std::string> lines;
  for (auto& l : util::split(util::normalize_newlines(text), "\n"))
    if (!util::trim(l).empty()) lines.push_back(l);
  return lines;
}

inline double parse_component(const std::string& s, std::size_t line) {
  auto v = util::parse_double(s);
  if (!v || !std::isfinite(*v))
    throw Error(ErrorKind::FormatError, "line " + std::to_string(line) + ": bad vector component '" + s + "'");
  return *v;
}

}  // namespace detail

/// Word vectors in text form: a "<count> <dim> [provenance]" header, then
/// one "word v1 .. vdim" row per word.
inline WordVectors parse_vectors(const std::string& text) {
  auto lines = detail::content_lines(text);
  if (lines.empty()) throw Error(ErrorKind::FormatError, "empty vector file");
  auto header = detail::parse_vector_header(lines[0]);
  if (header.dim < 2) throw Error(ErrorKind::FormatError, "dim must be >= 2");
  std::vector<std::string> words;
  Matrix m(lines.size() - 1, header.dim);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto parts = util::split_ws(lines[i]);
    if (parts.size() != header.dim + 1)
      throw Error(ErrorKind::FormatError, "line " + std::to_string(i + 1) + ": expected " +
                                              std::to_string(header.dim) + " components, found " +
                                              std::to_string(parts.size() - 1));
    words.push_back(parts[0]);
    for (std::size_t d = 0; d < header.dim; ++d) m(i - 1, d) = detail::parse_component(parts[d + 1], i + 1);
  }
  if (words.size() != header.count)
    throw Error(ErrorKind::FormatError, "header announces " + std::to_string(header.count) + " rows, file has " +
                                            std::to_string(words.size()));
  auto v = WordVectors::from_rows(std::move(words), std::move(m), VectorSource::loaded);
  v.provenance = header.provenance;
  return v;
}

inline WordVectors load_vectors(const std::filesystem::path& path) { return parse_vectors(util::read_file(path)); }

inline std::string format_vectors(const WordVectors& v) {
  std::string out = std::to_string(v.size()) + " " + std::to_string(v.dim);
  if (!v.provenance.empty()) out += " " + v.provenance;
  out += "\n";
  for (std::size_t i = 0; i < v.size(); ++i) {
    out += v.words[i];
    for (std::size_t d = 0; d < v.dim; ++d) out += " " + util::format_double(v.matrix(i, d));
    out += "\n";
  }
  return out;
}

inline void save_vectors(const WordVectors& v, const std::filesystem::path& path) {
  util::write_file(path, format_vectors(v));
}

/// Externally computed unit vectors aligned against a corpus.
struct UnitEmbeddings {
  std::size_t dim = 0;
  std::map<UnitKey, std::vector<double>> vectors;
  std::string provenance;
  /// corpus units without a vector
  std::vector<UnitKey> missing_units;
  /// rows whose key is not in the corpus; dropped
  std::vector<UnitKey> unknown_keys;
  double coverage = 0.0;
  bool coverage_warning = false;
};

inline constexpr double kMinUnitCoverage = 0.9;

/// Rows are "doc_id reference v1 .. vdim" (or "doc_id#reference v1 ..").
inline UnitEmbeddings parse_unit_embeddings(const std::string& text, const Corpus& corpus) {
  auto lines = detail::content_lines(text);
  if (lines.empty()) throw Error(ErrorKind::FormatError, "empty unit embedding file");
  auto header = detail::parse_vector_header(lines[0]);
  UnitEmbeddings e;
  e.dim = header.dim;
  e.provenance = header.provenance;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto parts = util::split_ws(lines[i]);
    UnitKey key;
    std::size_t first;
    if (parts.size() == header.dim + 2) {
      auto ref = util::parse_int(parts[1]);
      if (!ref || *ref < 0) throw Error(ErrorKind::FormatError, "line " + std::to_string(i + 1) + ": bad reference");
      key = {parts[0], static_cast<std::size_t>(*ref)};
      first = 2;
    } else if (parts.size() == header.dim + 1 && UnitKey::parse(parts[0])) {
      key = *UnitKey::parse(parts[0]);
      first = 1;
    } else {
      throw Error(ErrorKind::FormatError, "line " + std::to_string(i + 1) + ": row does not have dim " +
                                              std::to_string(header.dim));
    }
    std::vector<double> vec;
    for (std::size_t d = 0; d < header.dim; ++d) vec.push_back(detail::parse_component(parts[first + d], i + 1));
    if (!corpus.find(key)) {
      e.unknown_keys.push_back(key);
      continue;
    }
    if (!e.vectors.emplace(key, std::move(vec)).second)
      throw Error(ErrorKind::FormatError, "duplicate unit " + key.to_string());
  }
  if (lines.size() - 1 != header.count)
    throw Error(ErrorKind::FormatError, "header announces " + std::to_string(header.count) + " rows, file has " +
                                            std::to_string(lines.size() - 1));
  for (const auto& u : corpus.units())
    if (!e.vectors.count(u.key())) e.missing_units.push_back(u.key());
  e.coverage = corpus.empty() ? 1.0 : static_cast<double>(e.vectors.size()) / static_cast<double>(corpus.size());
  e.coverage_warning = e.coverage < kMinUnitCoverage;
  return e;
}

inline UnitEmbeddings load_unit_embeddings(const std::filesystem::path& path, const Corpus& corpus) {
  return parse_unit_embeddings(util::read_file(path), corpus);
}

// ------------------------------------------------------------ projection

struct Projection {
  /// n x target_dim, equal to U_k diag(s_k)
  Matrix coordinates;
  /// all singular values, descending
  std::vector<double> singular_values;
  /// dim x target_dim right singular vectors
  Matrix components;
};

/// Truncated SVD. Each right singular vector is signed so its
/// largest-magnitude component is positive.
inline Projection project_svd(const Matrix& x, std::size_t target_dim = 2) {
  if (target_dim < 1 || target_dim >= x.cols)
    throw Error(ErrorKind::InvalidArgument, "target_dim must be in [1, dim)");
  if (x.rows < target_dim) throw Error(ErrorKind::RankDeficient, "fewer points than target_dim");
  auto d = svd(x);
  const double tol = std::max(x.rows, x.cols) * 1e-12 * (d.s.empty() ? 0.0 : d.s[0]);
  if (d.s.size() < target_dim || d.s[target_dim - 1] <= tol || d.s[0] == 0.0)
    throw Error(ErrorKind::RankDeficient, "matrix rank is below " + std::to_string(target_dim));
  Projection p;
  p.singular_values = d.s;
  p.components = Matrix(x.cols, target_dim);
  for (std::size_t k = 0; k < target_dim; ++k) {
    std::size_t big = 0;
    for (std::size_t i = 1; i < x.cols; ++i)
      if (std::abs(d.v(i, k)) > std::abs(d.v(big, k))) big = i;
    const double sign = d.v(big, k) < 0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < x.cols; ++i) p.components(i, k) = sign * d.v(i, k);
  }
  p.coordinates = multiply(x, p.components);
  return p;
}

inline Projection project_svd(const WordVectors& v, std::size_t target_dim = 2) {
  return project_svd(v.matrix, target_dim);
}

// --------------------------------------------------------------- k-means

struct KMeansResult {
  std::vector<std::size_t> assignment;
  Matrix centroids;
  /// WCSS after each assignment step
  std::vector<double> wcss_trace;
  double wcss = 0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// k-means++ seeding, then Lloyd iterations until the assignment stops
/// changing or max_iters is reached. An emptied cluster keeps its centroid.
inline KMeansResult kmeans(const Matrix& x, std::size_t k, std::uint64_t seed, std::size_t max_iters = 300) {
  const std::size_t n = x.rows, d = x.cols;
  if (k < 1 || k > n) throw Error(ErrorKind::InvalidK, "k must be in [1, number of points]");
  Rng rng(seed);
  KMeansResult r;
  r.centroids = Matrix(k, d);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(n, false);
  std::size_t pick = rng.below(n);
  for (std::size_t c = 0; c < k; ++c) {
    if (c > 0) {
      double total = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (!chosen[i]) total += best[i];
      if (total > 0) {
        double u = rng.uniform() * total;
        pick = n;
        for (std::size_t i = 0; i < n; ++i) {
          if (chosen[i] || best[i] == 0) continue;
          pick = i;
          if ((u -= best[i]) < 0) break;
        }
      } else {
        pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), false) - chosen.begin());
      }
    }
    chosen[pick] = true;
    std::copy(x.row(pick), x.row(pick) + d, r.centroids.row(c));
    for (std::size_t i = 0; i < n; ++i) best[i] = std::min(best[i], squared_distance(x.row(i), r.centroids.row(c), d));
  }

  r.assignment.assign(n, SIZE_MAX);
  for (std::size_t it = 0; it < std::max<std::size_t>(1, max_iters); ++it) {
    bool changed = false;
    double wcss = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t arg = 0;
      double dist = squared_distance(x.row(i), r.centroids.row(0), d);
      for (std::size_t c = 1; c < k; ++c) {
        const double dc = squared_distance(x.row(i), r.centroids.row(c), d);
        if (dc < dist) {
          dist = dc;
          arg = c;
        }
      }
      if (arg != r.assignment[i]) changed = true;
      r.assignment[i] = arg;
      wcss += dist;
    }
    r.wcss_trace.push_back(wcss);
    r.wcss = wcss;
    r.iterations = it + 1;
    if (!changed) {
      r.converged = true;
      break;
    }
    Matrix sums(k, d);
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++sizes[r.assignment[i]];
      for (std::size_t j = 0; j < d; ++j) sums(r.assignment[i], j) += x(i, j);
    }
    for (std::size_t c = 0; c < k; ++c)
      if (sizes[c])
        for (std::size_t j = 0; j < d; ++j) r.centroids(c, j) = sums(c, j) / static_cast<double>(sizes[c]);
  }
  return r;
}

// ------------------------------------------------------------- neighbors

inline double cosine(const double* a, const double* b, std::size_t n) {
  const double na = norm(a, n), nb = norm(b, n);
  if (na == 0 || nb == 0) return 0.0;
  return dot(a, b, n) / (na * nb);
}

/// Top-n words by cosine similarity, excluding the query; ties by word.
inline std::vector<std::pair<std::string, double>> neighbors(const WordVectors& v, const std::string& word,
                                                             std::size_t n) {
  auto q = v.find(word);
  if (!q) throw Error(ErrorKind::NotFound, "word not in vocabulary: " + word);
  std::vector<std::pair<std::string, double>> all;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (i != *q) all.emplace_back(v.words[i], cosine(v.row(*q), v.row(i), v.dim));
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (all.size() > n) all.resize(n);
  return all;
}

// ---------------------------------------------------------------- export

/// Marks the ceil(fraction * n) points farthest from the centroid of
/// `coords`; ties go to the earlier row.
inline std::vector<bool> peripheral_points(const Matrix& coords, double fraction = 0.1) {
  const std::size_t n = coords.rows;
  std::vector<bool> mark(n, false);
  if (n == 0) return mark;
  std::vector<double> centre(coords.cols, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < coords.cols; ++j) centre[j] += coords(i, j) / static_cast<double>(n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = squared_distance(coords.row(i), centre.data(), coords.cols);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
  const auto take = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-12));
  for (std::size_t i = 0; i < std::min(take, n); ++i) mark[order[i]] = true;
  return mark;
}

/// word,x,y,cluster,label_me
inline Table projection_table(const std::vector<std::string>& words, const Matrix& coords,
                              const std::vector<std::size_t>& clusters) {
  if (coords.cols < 2 || coords.rows != words.size() || (!clusters.empty() && clusters.size() != words.size()))
    throw Error(ErrorKind::InvalidArgument, "projection export needs one 2-D point per word");
  auto label = peripheral_points(coords);
  Table t;
  t.header = {"word", "x", "y", "cluster", "label_me"};
  for (std::size_t i = 0; i < words.size(); ++i)
    t.rows.push_back({words[i], util::format_double(coords(i, 0)), util::format_double(coords(i, 1)),
                      clusters.empty() ? "" : std::to_string(clusters[i]), label[i] ? "true" : "false"});
  return t;
}

/// For each cluster, the member words closest to its centroid.
inline std::vector<std::vector<std::string>> central_words(const WordVectors& v, const KMeansResult& km,
                                                           std::size_t per_cluster) {
  std::vector<std::vector<std::pair<double, std::string>>> members(km.centroids.rows);
  for (std::size_t i = 0; i < v.size(); ++i)
    members[km.assignment[i]].emplace_back(squared_distance(v.row(i), km.centroids.row(km.assignment[i]), v.dim),
                                           v.words[i]);
  std::vector<std::vector<std::string>> out;
  for (auto& m : members) {
    std::sort(m.begin(), m.end());
    std::vector<std::string> words;
    for (std::size_t i = 0; i < std::min(per_cluster, m.size()); ++i) words.push_back(m[i].second);
    out.push_back(std::move(words));
  }
  return out;
}

}  // namespace ethnocode
