#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ethnocode/corpus.hpp"
#include "ethnocode/csv.hpp"
#include "ethnocode/embeddings.hpp"
#include "ethnocode/error.hpp"
#include "ethnocode/rng.hpp"
#include "ethnocode/textprep.hpp"
#include "ethnocode/util.hpp"

namespace ethnocode {

enum class Representation { bow, tfidf, unit_embedding };
enum class ClassifierKind { logistic_regression, linear_svm };

constexpr std::string_view to_string(Representation r) {
  constexpr std::string_view names[] = {"bow", "tfidf", "unit_embedding"};
  return names[static_cast<int>(r)];
}

constexpr std::string_view to_string(ClassifierKind k) {
  return k == ClassifierKind::logistic_regression ? "logistic_regression" : "linear_svm";
}

inline std::optional<Representation> parse_representation(std::string_view s) {
  for (int i = 0; i < 3; ++i)
    if (to_string(static_cast<Representation>(i)) == s) return static_cast<Representation>(i);
  return std::nullopt;
}

inline std::optional<ClassifierKind> parse_classifier(std::string_view s) {
  if (s == "logistic_regression" || s == "lr") return ClassifierKind::logistic_regression;
  if (s == "linear_svm" || s == "svm") return ClassifierKind::linear_svm;
  return std::nullopt;
}

// ------------------------------------------------------------- labels

/// Human (or reviewed) label of every unit for `code`: 1 if the code is
/// applied, 0 otherwise. Units whose only record is machine-made are left
/// out.
inline std::map<UnitKey, int> human_labels(const Corpus& corpus, const std::string& code) {
  std::map<UnitKey, int> out;
  for (const auto& u : corpus.units()) {
    auto a = corpus.assignment(u.key(), code);
    if (a && a->origin == CodeOrigin::machine) continue;
    out[u.key()] = a && a->positive ? 1 : 0;
  }
  return out;
}

struct Split {
  std::vector<UnitKey> train;
  std::vector<UnitKey> eval;
  std::string id;
};

/// Stratified split: round(fraction * count) of the positives and of the
/// negatives go to training.
inline Split split_train_eval(const std::map<UnitKey, int>& labels, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0 && train_fraction <= 1))
    throw Error(ErrorKind::InvalidArgument, "train fraction must be in (0, 1]");
  std::vector<UnitKey> pos, neg;
  for (const auto& [k, y] : labels) (y ? pos : neg).push_back(k);
  if (pos.size() < 2 || neg.size() < 2)
    throw Error(ErrorKind::TooFewExamples, "need >= 2 positive and >= 2 negative units, have " +
                                               std::to_string(pos.size()) + " positive and " +
                                               std::to_string(neg.size()) + " negative");
  Rng rng(seed);
  rng.shuffle(pos.begin(), pos.end());
  rng.shuffle(neg.begin(), neg.end());
  const auto n_pos = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(pos.size())));
  const auto n_neg = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(neg.size())));
  Split s;
  s.train.insert(s.train.end(), pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(n_pos));
  s.train.insert(s.train.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(n_neg));
  s.eval.insert(s.eval.end(), pos.begin() + static_cast<std::ptrdiff_t>(n_pos), pos.end());
  s.eval.insert(s.eval.end(), neg.begin() + static_cast<std::ptrdiff_t>(n_neg), neg.end());
  const std::size_t eval_pos = pos.size() - n_pos, eval_neg = neg.size() - n_neg;
  if (n_pos == 0 || n_neg == 0)
    throw Error(ErrorKind::TooFewExamples, "training side has " + std::to_string(n_pos) + " positive and " +
                                               std::to_string(n_neg) + " negative units");
  if (eval_pos == 0 && eval_neg == 0)
    throw Error(ErrorKind::TooFewExamples, "evaluation side is empty");
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.eval.begin(), s.eval.end());
  std::string basis = std::to_string(seed) + "/" + util::format_double(train_fraction);
  for (const auto& k : s.train) basis += "|" + k.to_string();
  s.id = util::hex64(util::fnv1a64(basis));
  return s;
}

inline Split split_train_eval(const Corpus& corpus, const std::string& code, double train_fraction,
                              std::uint64_t seed) {
  return split_train_eval(human_labels(corpus, code), train_fraction, seed);
}

/// Keeps every positive and at most ratio * positives negatives.
inline std::vector<UnitKey> balance_negatives(const std::vector<UnitKey>& keys, const std::map<UnitKey, int>& labels,
                                              double ratio, std::uint64_t seed) {
  std::vector<UnitKey> pos, neg;
  for (const auto& k : keys) (labels.at(k) ? pos : neg).push_back(k);
  const auto cap = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(pos.size())));
  if (neg.size() > cap) {
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    rng.shuffle(neg.begin(), neg.end());
    neg.resize(cap);
  }
  pos.insert(pos.end(), neg.begin(), neg.end());
  std::sort(pos.begin(), pos.end());
  return pos;
}

// ----------------------------------------------------------- features

struct FeatureMatrix {
  std::size_t dim = 0;
  std::vector<UnitKey> keys;
  /// sparse rows, entries sorted by column
  std::vector<std::vector<std::pair<std::uint32_t, double>>> rows;

  std::size_t size() const { return rows.size(); }
};

inline double sparse_dot(const std::vector<std::pair<std::uint32_t, double>>& row, const std::vector<double>& w) {
  double s = 0;
  for (const auto& [j, v] : row) s += v * w[j];
  return s;
}

/// Maps units to feature rows. The vocabulary and idf are fit on training
/// units only.
struct Featurizer {
  Representation mode = Representation::tfidf;
  std::vector<std::string> vocabulary;
  std::map<std::string, std::size_t> index;
  std::vector<double> idf;
  std::size_t embedding_dim = 0;

  std::size_t dim() const { return mode == Representation::unit_embedding ? embedding_dim : vocabulary.size(); }

  static Featurizer fit(const std::vector<const TokenizedUnit*>& training, Representation mode,
                        const UnitEmbeddings* embeddings = nullptr) {
    Featurizer f;
    f.mode = mode;
    if (mode == Representation::unit_embedding) {
      if (!embeddings) throw Error(ErrorKind::MissingEmbedding, "no unit embeddings loaded");
      f.embedding_dim = embeddings->dim;
      return f;
    }
    std::map<std::string, std::size_t> df;
    for (const auto* u : training) {
      std::set<std::string> seen;
      for (const auto& t : u->tokens) seen.insert(t.stem);
      for (const auto& s : seen) ++df[s];
    }
    const double D = static_cast<double>(training.size());
    for (const auto& [w, c] : df) {
      f.index[w] = f.vocabulary.size();
      f.vocabulary.push_back(w);
      f.idf.push_back(std::log((1.0 + D) / (1.0 + static_cast<double>(c))) + 1.0);
    }
    return f;
  }

  std::vector<std::pair<std::uint32_t, double>> row(const TokenizedUnit& u, const UnitEmbeddings* embeddings) const {
    std::vector<std::pair<std::uint32_t, double>> out;
    if (mode == Representation::unit_embedding) {
      const auto* vecs = embeddings ? &embeddings->vectors : nullptr;
      auto it = vecs ? vecs->find(u.key) : decltype(vecs->end()){};
      if (!vecs || it == vecs->end()) throw Error(ErrorKind::MissingEmbedding, u.key.to_string());
      if (it->second.size() != embedding_dim)
        throw Error(ErrorKind::FormatError, "embedding dimension differs from the model's");
      for (std::size_t j = 0; j < embedding_dim; ++j)
        if (it->second[j] != 0.0) out.emplace_back(static_cast<std::uint32_t>(j), it->second[j]);
      return out;
    }
    std::map<std::size_t, double> counts;
    for (const auto& t : u.tokens) {
      auto it = index.find(t.stem);
      if (it != index.end()) counts[it->second] += 1.0;
    }
    double norm2 = 0;
    for (auto& [j, c] : counts) {
      if (mode == Representation::tfidf) c *= idf[j];
      norm2 += c * c;
    }
    for (const auto& [j, c] : counts)
      out.emplace_back(static_cast<std::uint32_t>(j), mode == Representation::tfidf ? c / std::sqrt(norm2) : c);
    return out;
  }

  FeatureMatrix transform(const std::vector<const TokenizedUnit*>& units,
                          const UnitEmbeddings* embeddings = nullptr) const {
    FeatureMatrix m;
    m.dim = dim();
    for (const auto* u : units) {
      m.keys.push_back(u->key);
      m.rows.push_back(row(*u, embeddings));
    }
    return m;
  }
};

/// Looks up tokenized units by key.
class UnitIndex {
 public:
  explicit UnitIndex(const TokenizedCorpus& corpus) {
    for (const auto& u : corpus) by_key_[u.key] = &u;
  }

  const TokenizedUnit& at(const UnitKey& k) const {
    auto it = by_key_.find(k);
    if (it == by_key_.end()) throw Error(ErrorKind::NotFound, "unit " + k.to_string());
    return *it->second;
  }

  std::vector<const TokenizedUnit*> select(const std::vector<UnitKey>& keys) const {
    std::vector<const TokenizedUnit*> out;
    for (const auto& k : keys) out.push_back(&at(k));
    return out;
  }

 private:
  std::map<UnitKey, const TokenizedUnit*> by_key_;
};

// ---------------------------------------------------------- classifiers

struct LinearModel {
  ClassifierKind kind = ClassifierKind::logistic_regression;
  std::vector<double> weights;
  double bias = 0;

  double margin(const std::vector<std::pair<std::uint32_t, double>>& row) const {
    return sparse_dot(row, weights) + bias;
  }
  /// Probability for logistic regression; logistic link on the margin for
  /// the SVM.
  double score(const std::vector<std::pair<std::uint32_t, double>>& row) const {
    return 1.0 / (1.0 + std::exp(-margin(row)));
  }
};

namespace detail {

inline double log1p_exp(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace detail

/// Mean loss over `rows` plus (l2 / 2) |w|^2, and its (sub)gradient with
/// the bias derivative stored last. Logistic regression uses log-loss,
/// the SVM the hinge loss on targets 2y - 1.
inline std::pair<double, std::vector<double>> loss_and_gradient(const FeatureMatrix& x, const std::vector<int>& y,
                                                                const LinearModel& m, double l2,
                                                                std::span<const std::size_t> rows) {
  const std::size_t d = m.weights.size();
  std::vector<double> grad(d + 1, 0.0);
  double loss = 0;
  const double inv = rows.empty() ? 0.0 : 1.0 / static_cast<double>(rows.size());
  for (auto i : rows) {
    const double z = m.margin(x.rows[i]);
    double g;
    if (m.kind == ClassifierKind::logistic_regression) {
      loss += detail::log1p_exp(z) - y[i] * z;
      g = 1.0 / (1.0 + std::exp(-z)) - y[i];
    } else {
      const double t = y[i] ? 1.0 : -1.0;
      const double slack = 1.0 - t * z;
      loss += std::max(0.0, slack);
      g = slack > 0 ? -t : 0.0;
    }
    if (g == 0.0) continue;
    for (const auto& [j, v] : x.rows[i]) grad[j] += g * v * inv;
    grad[d] += g * inv;
  }
  loss *= inv;
  for (std::size_t j = 0; j < d; ++j) {
    loss += 0.5 * l2 * m.weights[j] * m.weights[j];
    grad[j] += l2 * m.weights[j];
  }
  return {loss, std::move(grad)};
}

inline std::pair<double, std::vector<double>> loss_and_gradient(const FeatureMatrix& x, const std::vector<int>& y,
                                                                const LinearModel& m, double l2) {
  std::vector<std::size_t> all(x.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return loss_and_gradient(x, y, m, l2, all);
}

struct TrainOptions {
  ClassifierKind kind = ClassifierKind::logistic_regression;
  double l2 = 1e-5;
  std::size_t epochs = 100;
  double learning_rate = 5.0;
  std::size_t batch_size = 8;
  std::uint64_t seed = 1;
};

/// Seeded mini-batch gradient descent. The bias starts at the training
/// log-odds.
inline LinearModel train_classifier(const FeatureMatrix& x, const std::vector<int>& y, const TrainOptions& opt) {
  if (x.size() != y.size()) throw Error(ErrorKind::LengthMismatch, "one label per feature row required");
  std::size_t positives = 0;
  for (int v : y) positives += v == 1;
  if (positives == 0 || positives == y.size())
    throw Error(ErrorKind::DegenerateLabels, "training labels contain a single class");
  LinearModel m;
  m.kind = opt.kind;
  m.weights.assign(x.dim, 0.0);
  const double p = static_cast<double>(positives) / static_cast<double>(y.size());
  m.bias = opt.kind == ClassifierKind::logistic_regression ? std::log(p / (1 - p)) : 0.0;
  Rng rng(opt.seed);
  std::vector<std::size_t> order(x.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t batch = std::max<std::size_t>(1, opt.batch_size);
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    const double lr = opt.learning_rate / (1.0 + 0.05 * static_cast<double>(epoch));
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      auto [loss, grad] = loss_and_gradient(x, y, m, opt.l2, std::span<const std::size_t>(order).subspan(start, end - start));
      for (std::size_t j = 0; j < x.dim; ++j) m.weights[j] -= lr * grad[j];
      m.bias -= lr * grad[x.dim];
    }
  }
  return m;
}

// ------------------------------------------------------------ code model

struct CodeModel {
  std::string code;
  Featurizer featurizer;
  LinearModel linear;
  double threshold = 0.5;
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
  std::uint64_t seed = 0;
  std::string split_id;
  TrainOptions options;

  double score(const TokenizedUnit& u, const UnitEmbeddings* embeddings = nullptr) const {
    return linear.score(featurizer.row(u, embeddings));
  }
};

struct CodeTrainConfig {
  Representation representation = Representation::tfidf;
  TrainOptions options;
  /// negatives kept per positive; the workflow floor is 1:1, capped at 3:1
  double negative_ratio = 1.0;
};

inline CodeModel train_code_model(const std::string& code, const UnitIndex& units, const std::vector<UnitKey>& train,
                                  const std::map<UnitKey, int>& labels, const CodeTrainConfig& config,
                                  const std::string& split_id = "", const UnitEmbeddings* embeddings = nullptr) {
  if (config.negative_ratio < 1.0 || config.negative_ratio > 3.0)
    throw Error(ErrorKind::InvalidArgument, "negative ratio must be within [1, 3]");
  auto keys = balance_negatives(train, labels, config.negative_ratio, config.options.seed);
  auto selected = units.select(keys);
  CodeModel model;
  model.code = code;
  model.featurizer = Featurizer::fit(selected, config.representation, embeddings);
  auto x = model.featurizer.transform(selected, embeddings);
  std::vector<int> y;
  for (const auto& k : keys) y.push_back(labels.at(k));
  model.linear = train_classifier(x, y, config.options);
  for (int v : y) (v ? model.n_positive : model.n_negative) += 1;
  model.seed = config.options.seed;
  model.split_id = split_id;
  model.options = config.options;
  return model;
}

// ------------------------------------------------------------ threshold

struct ThresholdResult {
  double threshold = 1.0;
  double recall = 0;
  double precision = 1.0;
  bool no_predicted_positives = false;
};

/// The largest threshold t such that predicting score >= t reaches the
/// target recall on the evaluation scores.
inline ThresholdResult tune_threshold(const std::vector<double>& scores, const std::vector<int>& labels,
                                      double target_recall) {
  if (scores.size() != labels.size()) throw Error(ErrorKind::LengthMismatch, "one label per score required");
  if (!(target_recall >= 0 && target_recall <= 1)) throw Error(ErrorKind::InvalidArgument, "target recall in [0, 1]");
  std::vector<double> pos;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (labels[i]) pos.push_back(scores[i]);
  if (pos.empty()) throw Error(ErrorKind::NoPositives, "evaluation set has no positives");
  std::sort(pos.rbegin(), pos.rend());
  const auto r = static_cast<std::size_t>(std::ceil(target_recall * static_cast<double>(pos.size()) - 1e-9));
  ThresholdResult out;
  out.threshold = r == 0 ? 1.0 : pos[r - 1];
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i] >= out.threshold) (labels[i] ? tp : fp) += 1;
  out.recall = static_cast<double>(tp) / static_cast<double>(pos.size());
  out.no_predicted_positives = tp + fp == 0;
  out.precision = out.no_predicted_positives ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  return out;
}

// ----------------------------------------------------------- prediction

struct Prediction {
  UnitKey unit;
  double score = 0;
  bool predicted = false;
};

inline std::vector<Prediction> apply_codes(const CodeModel& model, const std::vector<const TokenizedUnit*>& units,
                                           const UnitEmbeddings* embeddings = nullptr) {
  std::vector<Prediction> out;
  for (const auto* u : units) {
    const double s = model.score(*u, embeddings);
    out.push_back({u->key, s, s >= model.threshold});
  }
  return out;
}

/// Adds machine-origin codes for predicted units; units already carrying a
/// human or review decision for the code are left as they are.
inline Corpus with_machine_codes(const Corpus& corpus, const std::string& code,
                                 const std::vector<Prediction>& predictions) {
  std::set<UnitKey> positive;
  for (const auto& p : predictions)
    if (p.predicted) positive.insert(p.unit);
  std::vector<Unit> units = corpus.units();
  auto assignments = corpus.assignments();
  std::set<UnitKey> decided;
  for (const auto& a : assignments)
    if (a.code == code && a.origin != CodeOrigin::machine) decided.insert(a.unit);
  for (auto& u : units) {
    const auto k = u.key();
    if (!positive.count(k) || decided.count(k) || u.codes.count(code)) continue;
    u.codes.insert(code);
    assignments.push_back({k, code, CodeOrigin::machine, true});
  }
  auto codebook = corpus.codebook();
  codebook.insert(code);
  return Corpus(std::move(units), corpus.documents(), std::move(codebook), std::move(assignments));
}

inline Table predictions_table(const std::string& code, const std::vector<Prediction>& predictions) {
  Table t;
  t.header = {"unit", "code", "score", "predicted"};
  for (const auto& p : predictions)
    t.rows.push_back({p.unit.to_string(), code, util::format_double(p.score), p.predicted ? "1" : "0"});
  return t;
}

inline std::vector<Prediction> predictions_from_table(const Table& t) {
  const auto iu = t.require_column("unit"), is = t.require_column("score"), ip = t.require_column("predicted");
  std::vector<Prediction> out;
  for (const auto& row : t.rows) {
    auto key = UnitKey::parse(row[iu]);
    auto score = util::parse_double(row[is]);
    if (!key || !score) throw Error(ErrorKind::FormatError, "bad prediction row for " + row[iu]);
    out.push_back({*key, *score, row[ip] == "1" || row[ip] == "true"});
  }
  return out;
}

// ----------------------------------------------------------- reliability

/// Krippendorff's alpha for two coders, nominal binary labels, no missing
/// values: 1 - (n - 1)(o01 + o10) / (2 n0 n1) over the coincidence matrix.
inline double krippendorff_alpha(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::LengthMismatch, "label sequences differ in length");
  if (a.size() < 2) throw Error(ErrorKind::InvalidArgument, "need at least 2 units");
  long long n0 = 0, n1 = 0, disagree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] != 0 && a[i] != 1) || (b[i] != 0 && b[i] != 1))
      throw Error(ErrorKind::InvalidArgument, "labels must be 0 or 1");
    n1 += a[i] + b[i];
    n0 += 2 - a[i] - b[i];
    disagree += a[i] != b[i];
  }
  if (n0 == 0 || n1 == 0) throw Error(ErrorKind::UndefinedAlpha, "all labels are identical; alpha is undefined");
  const double n = static_cast<double>(n0 + n1);
  // o01 + o10 = 2 * disagreements
  return 1.0 - (n - 1.0) * (2.0 * static_cast<double>(disagree)) /
                   (2.0 * static_cast<double>(n0) * static_cast<double>(n1));
}

inline double krippendorff_alpha(const std::vector<int>& a, const std::vector<int>& b) {
  return krippendorff_alpha(std::span<const int>(a), std::span<const int>(b));
}

struct ReliabilityReport {
  std::string code;
  std::optional<double> alpha;
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::string eval_id;
  /// precision is 1.0 by convention
  bool no_predicted_positives = false;
  /// recall is 1.0 by convention
  bool no_gold_positives = false;
};

inline ReliabilityReport evaluate(const std::vector<int>& machine, const std::vector<int>& gold,
                                  const std::string& code = "", const std::string& eval_id = "") {
  if (machine.size() != gold.size()) throw Error(ErrorKind::LengthMismatch, "one gold label per prediction required");
  if (machine.empty()) throw Error(ErrorKind::EmptyEval, "no units to evaluate");
  ReliabilityReport r;
  r.code = code;
  r.eval_id = eval_id;
  for (std::size_t i = 0; i < machine.size(); ++i) {
    if (machine[i] && gold[i]) ++r.tp;
    else if (machine[i]) ++r.fp;
    else if (gold[i]) ++r.fn;
    else ++r.tn;
  }
  r.no_predicted_positives = r.tp + r.fp == 0;
  r.no_gold_positives = r.tp + r.fn == 0;
  r.precision = r.no_predicted_positives ? 1.0 : static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
  r.recall = r.no_gold_positives ? 1.0 : static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  if (machine.size() >= 2) {
    try {
      r.alpha = krippendorff_alpha(machine, gold);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::UndefinedAlpha) throw;
    }
  }
  return r;
}

inline ReliabilityReport evaluate(const std::vector<Prediction>& predictions, const std::map<UnitKey, int>& gold,
                                  const std::string& code = "", const std::string& eval_id = "") {
  std::vector<int> m, g;
  for (const auto& p : predictions) {
    auto it = gold.find(p.unit);
    if (it == gold.end()) throw Error(ErrorKind::NotFound, "no gold label for " + p.unit.to_string());
    m.push_back(p.predicted);
    g.push_back(it->second);
  }
  return evaluate(m, g, code, eval_id);
}

inline nlohmann::json to_json(const ReliabilityReport& r) {
  nlohmann::json j{{"code", r.code},
                   {"precision", r.precision},
                   {"recall", r.recall},
                   {"f1", r.f1},
                   {"tp", r.tp},
                   {"fp", r.fp},
                   {"fn", r.fn},
                   {"tn", r.tn},
                   {"eval_id", r.eval_id},
                   {"no_predicted_positives", r.no_predicted_positives},
                   {"no_gold_positives", r.no_gold_positives}};
  j["alpha"] = r.alpha ? nlohmann::json(*r.alpha) : nlohmann::json(nullptr);
  return j;
}

// ---------------------------------------------------------------- review

enum class Decision { pending, accept, reject };

constexpr std::string_view to_string(Decision d) {
  constexpr std::string_view names[] = {"pending", "accept", "reject"};
  return names[static_cast<int>(d)];
}

inline std::optional<Decision> parse_decision(std::string_view s) {
  for (int i = 0; i < 3; ++i)
    if (to_string(static_cast<Decision>(i)) == s) return static_cast<Decision>(i);
  return std::nullopt;
}

struct ReviewItem {
  UnitKey unit;
  double score = 0;
  Decision decision = Decision::pending;
  std::string reviewer;
  std::string timestamp;

  bool operator==(const ReviewItem&) const = default;
};

struct ReviewQueue {
  std::string code;
  std::size_t version = 1;
  std::vector<ReviewItem> items;

  std::size_t pending() const {
    return static_cast<std::size_t>(
        std::count_if(items.begin(), items.end(), [](const ReviewItem& i) { return i.decision == Decision::pending; }));
  }
  bool operator==(const ReviewQueue&) const = default;
};

/// Predicted positives by descending score (ties by unit key), minus
/// units a human already coded with `code`.
inline ReviewQueue build_review_queue(const std::vector<Prediction>& predictions, const std::string& code,
                                      const Corpus* corpus = nullptr) {
  ReviewQueue q;
  q.code = code;
  for (const auto& p : predictions) {
    if (!p.predicted) continue;
    if (corpus) {
      auto a = corpus->assignment(p.unit, code);
      if (a && a->positive && a->origin != CodeOrigin::machine) continue;
    }
    q.items.push_back({p.unit, p.score, Decision::pending, "", ""});
  }
  std::stable_sort(q.items.begin(), q.items.end(), [](const ReviewItem& a, const ReviewItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.unit < b.unit;
  });
  return q;
}

struct MergeResult {
  Corpus corpus;
  ReliabilityReport report;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

/// Accepts become review-origin codes; rejects become review-origin
/// explicit negatives and remove any machine code. With `gold`, the report
/// scores the accepted units against it; otherwise accepts count as true
/// positives.
inline MergeResult merge_review(const ReviewQueue& queue, const Corpus& corpus,
                                const std::map<UnitKey, int>* gold = nullptr) {
  if (auto p = queue.pending())
    throw Error(ErrorKind::IncompleteReview, std::to_string(p) + " queue items are still pending");
  std::map<UnitKey, Decision> decided;
  for (const auto& i : queue.items) decided[i.unit] = i.decision;

  std::vector<Unit> units = corpus.units();
  std::vector<CodeAssignment> assignments;
  for (const auto& a : corpus.assignments())
    if (!(a.code == queue.code && decided.count(a.unit) && a.origin == CodeOrigin::machine))
      assignments.push_back(a);
  MergeResult r;
  for (auto& u : units) {
    auto it = decided.find(u.key());
    if (it == decided.end()) continue;
    auto existing = corpus.assignment(u.key(), queue.code);
    if (existing && existing->origin == CodeOrigin::human && existing->positive) continue;
    if (it->second == Decision::accept) {
      u.codes.insert(queue.code);
      assignments.push_back({u.key(), queue.code, CodeOrigin::review, true});
      ++r.accepted;
    } else {
      u.codes.erase(queue.code);
      assignments.push_back({u.key(), queue.code, CodeOrigin::review, false});
      ++r.rejected;
    }
  }
  auto codebook = corpus.codebook();
  codebook.insert(queue.code);
  r.corpus = Corpus(std::move(units), corpus.documents(), std::move(codebook), std::move(assignments));

  if (gold) {
    std::vector<int> m, g;
    for (const auto& [k, y] : *gold) {
      auto it = decided.find(k);
      m.push_back(it != decided.end() && it->second == Decision::accept);
      g.push_back(y);
    }
    r.report = evaluate(m, g, queue.code, "post-review");
  } else {
    r.report.code = queue.code;
    r.report.tp = r.accepted;
    r.report.no_predicted_positives = r.accepted == 0;
    r.report.precision = 1.0;
    r.report.f1 = 0;
  }
  return r;
}

// ------------------------------------------------------------ model file

/// Writes model.json (metadata, bias, threshold) and weights.csv
/// (feature, idf, weight) into `dir`.
inline void save_code_model(const CodeModel& m, const std::filesystem::path& dir) {
  nlohmann::json j{{"code", m.code},
                   {"representation", std::string(to_string(m.featurizer.mode))},
                   {"classifier", std::string(to_string(m.linear.kind))},
                   {"bias", m.linear.bias},
                   {"threshold", m.threshold},
                   {"dim", m.featurizer.dim()},
                   {"n_positive", m.n_positive},
                   {"n_negative", m.n_negative},
                   {"seed", m.seed},
                   {"split_id", m.split_id},
                   {"l2", m.options.l2},
                   {"epochs", m.options.epochs},
                   {"learning_rate", m.options.learning_rate},
                   {"batch_size", m.options.batch_size}};
  util::write_file(dir / "model.json", j.dump(2) + "\n");
  Table t;
  t.header = {"feature", "idf", "weight"};
  for (std::size_t i = 0; i < m.linear.weights.size(); ++i) {
    const bool vocab = m.featurizer.mode != Representation::unit_embedding;
    t.rows.push_back({vocab ? m.featurizer.vocabulary[i] : std::to_string(i),
                      vocab ? util::format_double(m.featurizer.idf[i]) : "",
                      util::format_double(m.linear.weights[i])});
  }
  csv::write_table_file(dir / "weights.csv", t);
}

inline CodeModel load_code_model(const std::filesystem::path& dir) {
  auto j = nlohmann::json::parse(util::read_file(dir / "model.json"));
  CodeModel m;
  m.code = j.at("code");
  auto rep = parse_representation(j.at("representation").get<std::string>());
  auto cls = parse_classifier(j.at("classifier").get<std::string>());
  if (!rep || !cls) throw Error(ErrorKind::FormatError, "unknown representation or classifier in model.json");
  m.featurizer.mode = *rep;
  m.linear.kind = *cls;
  m.linear.bias = j.at("bias");
  m.threshold = j.at("threshold");
  m.n_positive = j.at("n_positive");
  m.n_negative = j.at("n_negative");
  m.seed = j.at("seed");
  m.split_id = j.at("split_id");
  m.options.kind = *cls;
  m.options.l2 = j.at("l2");
  m.options.epochs = j.at("epochs");
  m.options.learning_rate = j.at("learning_rate");
  m.options.batch_size = j.at("batch_size");
  auto t = csv::read_table_file(dir / "weights.csv");
  for (const auto& row : t.rows) {
    auto w = util::parse_double(row[2]);
    if (!w) throw Error(ErrorKind::FormatError, "bad weight for " + row[0]);
    m.linear.weights.push_back(*w);
    if (m.featurizer.mode != Representation::unit_embedding) {
      auto idf = util::parse_double(row[1]);
      if (!idf) throw Error(ErrorKind::FormatError, "bad idf for " + row[0]);
      m.featurizer.index[row[0]] = m.featurizer.vocabulary.size();
      m.featurizer.vocabulary.push_back(row[0]);
      m.featurizer.idf.push_back(*idf);
    }
  }
  if (m.featurizer.mode == Representation::unit_embedding) m.featurizer.embedding_dim = m.linear.weights.size();
  if (m.linear.weights.size() != j.at("dim").get<std::size_t>())
    throw Error(ErrorKind::FormatError, "weights.csv does not match the model dimension");
  return m;
}

// ------------------------------------------------------------ assignments

inline Table assignments_table(const Corpus& corpus) {
  Table t;
  t.header = {"unit", "code", "origin", "positive"};
  for (const auto& a : corpus.assignments())
    t.rows.push_back({a.unit.to_string(), a.code, std::string(to_string(a.origin)), a.positive ? "1" : "0"});
  return t;
}

/// The corpus with the assignment records of `t` added; codes of positive
/// records are put on their units, negative ones removed.
inline Corpus attach_assignments(const Corpus& corpus, const Table& t) {
  const auto iu = t.require_column("unit"), ic = t.require_column("code"), io = t.require_column("origin"),
             ip = t.require_column("positive");
  std::vector<Unit> units = corpus.units();
  std::map<UnitKey, std::size_t> pos;
  for (std::size_t i = 0; i < units.size(); ++i) pos[units[i].key()] = i;
  auto assignments = corpus.assignments();
  for (const auto& row : t.rows) {
    auto key = UnitKey::parse(row[iu]);
    if (!key) throw Error(ErrorKind::FormatError, "bad unit key " + row[iu]);
    CodeOrigin origin;
    if (row[io] == "human") origin = CodeOrigin::human;
    else if (row[io] == "machine") origin = CodeOrigin::machine;
    else if (row[io] == "review") origin = CodeOrigin::review;
    else throw Error(ErrorKind::FormatError, "unknown origin " + row[io]);
    const bool positive = row[ip] == "1" || row[ip] == "true";
    auto it = pos.find(*key);
    if (it == pos.end()) throw Error(ErrorKind::NotFound, "assignment for unknown unit " + row[iu]);
    if (positive) units[it->second].codes.insert(row[ic]);
    else units[it->second].codes.erase(row[ic]);
    assignments.push_back({*key, row[ic], origin, positive});
  }
  auto codebook = corpus.codebook();
  return Corpus(std::move(units), corpus.documents(), std::move(codebook), std::move(assignments));
}

// -------------------------------------------------------------- workflow

struct CodingRoundConfig {
  CodeTrainConfig train;
  double train_fraction = 0.25;
  double target_recall = 0.95;
  std::uint64_t split_seed = 1;
};

struct CodingRound {
  CodeModel model;
  Split split;
  ThresholdResult tuning;
  ReliabilityReport report;
  std::vector<Prediction> predictions;
  ReviewQueue queue;
};

/// One pass of split, train, tune, evaluate and apply. Units in `uncoded`
/// are never used as labels; they receive predictions and feed the queue.
inline CodingRound run_coding_round(const Corpus& corpus, const TokenizedCorpus& tokens, const std::string& code,
                                    const std::set<UnitKey>& uncoded, const CodingRoundConfig& config,
                                    const UnitEmbeddings* embeddings = nullptr) {
  auto labels = human_labels(corpus, code);
  for (const auto& k : uncoded) {
    auto a = corpus.assignment(k, code);
    if (!a || a->origin != CodeOrigin::review) labels.erase(k);
  }
  UnitIndex index(tokens);
  CodingRound r;
  r.split = split_train_eval(labels, config.train_fraction, config.split_seed);
  r.model = train_code_model(code, index, r.split.train, labels, config.train, r.split.id, embeddings);
  std::vector<double> scores;
  std::vector<int> gold;
  for (const auto& k : r.split.eval) {
    scores.push_back(r.model.score(index.at(k), embeddings));
    gold.push_back(labels.at(k));
  }
  r.tuning = tune_threshold(scores, gold, config.target_recall);
  r.model.threshold = r.tuning.threshold;
  std::vector<int> machine;
  for (double s : scores) machine.push_back(s >= r.model.threshold);
  r.report = evaluate(machine, gold, code, r.split.id);
  std::vector<UnitKey> targets;
  for (const auto& k : uncoded)
    if (!labels.count(k)) targets.push_back(k);
  r.predictions = apply_codes(r.model, index.select(targets), embeddings);
  r.queue = build_review_queue(r.predictions, code, &corpus);
  return r;
}

inline nlohmann::json to_json(const Split& s) {
  auto keys = [](const std::vector<UnitKey>& v) {
    std::vector<std::string> out;
    for (const auto& k : v) out.push_back(k.to_string());
    return out;
  };
  return {{"id", s.id}, {"train", keys(s.train)}, {"eval", keys(s.eval)}};
}

inline Split split_from_json(const nlohmann::json& j) {
  Split s;
  try {
    s.id = j.at("id");
    for (const char* part : {"train", "eval"})
      for (const auto& v : j.at(part)) {
        auto k = UnitKey::parse(v.get<std::string>());
        if (!k) throw Error(ErrorKind::FormatError, "bad unit key " + v.dump());
        (std::string(part) == "train" ? s.train : s.eval).push_back(*k);
      }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("bad split: ") + e.what());
  }
  return s;
}

inline nlohmann::json to_json(const ReviewQueue& q) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& i : q.items)
    items.push_back({{"unit", i.unit.to_string()},
                     {"score", i.score},
                     {"decision", std::string(to_string(i.decision))},
                     {"reviewer", i.reviewer},
                     {"timestamp", i.timestamp}});
  return {{"code", q.code}, {"version", q.version}, {"items", items}};
}

inline ReviewQueue queue_from_json(const nlohmann::json& j) {
  ReviewQueue q;
  q.code = j.at("code");
  q.version = j.at("version");
  for (const auto& i : j.at("items")) {
    auto key = UnitKey::parse(i.at("unit").get<std::string>());
    auto d = parse_decision(i.value("decision", "pending"));
    if (!key || !d) throw Error(ErrorKind::FormatError, "bad queue item");
    q.items.push_back({*key, i.at("score").get<double>(), *d, i.value("reviewer", ""), i.value("timestamp", "")});
  }
  return q;
}

/// Round settings from a JSON object; absent keys keep their defaults.
inline CodingRoundConfig coding_round_config(const nlohmann::json& j) {
  CodingRoundConfig c;
  try {
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.target_recall = j.value("target_recall", c.target_recall);
    c.split_seed = j.value("split_seed", c.split_seed);
    c.train.negative_ratio = j.value("negative_ratio", c.train.negative_ratio);
    auto& o = c.train.options;
    o.seed = j.value("seed", o.seed);
    o.epochs = j.value("epochs", o.epochs);
    o.learning_rate = j.value("learning_rate", o.learning_rate);
    o.l2 = j.value("l2", o.l2);
    o.batch_size = j.value("batch_size", o.batch_size);
    if (j.contains("representation")) {
      auto r = parse_representation(j.at("representation").get<std::string>());
      if (!r) throw Error(ErrorKind::ConfigError, "unknown representation " + j.at("representation").dump());
      c.train.representation = *r;
    }
    if (j.contains("classifier")) {
      auto k = parse_classifier(j.at("classifier").get<std::string>());
      if (!k) throw Error(ErrorKind::ConfigError, "unknown classifier " + j.at("classifier").dump());
      o.kind = *k;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigError, e.what());
  }
  return c;
}

}  // namespace ethnocode
