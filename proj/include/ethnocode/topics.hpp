#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ethnocode/csv.hpp"
#include "ethnocode/error.hpp"
#include "ethnocode/rng.hpp"
#include "ethnocode/textprep.hpp"
#include "ethnocode/util.hpp"

namespace ethnocode {

struct LdaOptions {
  std::size_t topics = 10;
  /// Defaults to 50 / topics when unset.
  std::optional<double> alpha;
  double beta = 0.01;
  std::size_t iterations = 1000;
  std::uint64_t seed = 20250101;
};

/// Collapsed-Gibbs LDA fit. Estimates come from the single final sampler
/// state; the first half of the iterations is nominal burn-in.
struct TopicModel {
  std::size_t topics = 0;
  double alpha = 0;
  double beta = 0;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  std::vector<std::string> vocabulary;
  std::vector<std::string> documents;
  /// topics x vocabulary, row-major
  std::vector<double> phi;
  /// documents x topics, row-major
  std::vector<double> theta;
  /// joint log p(w, z) after each sweep
  std::vector<double> log_likelihood;
  /// sum of the topic-count table after each sweep
  std::vector<std::size_t> assignment_totals;
  std::size_t token_count = 0;

  double phi_at(std::size_t k, std::size_t w) const { return phi[k * vocabulary.size() + w]; }
  double theta_at(std::size_t d, std::size_t k) const { return theta[d * topics + k]; }

  std::size_t dominant_topic(std::size_t d) const {
    std::size_t best = 0;
    for (std::size_t k = 1; k < topics; ++k)
      if (theta_at(d, k) > theta_at(d, best)) best = k;
    return best;
  }
};

namespace detail {

inline double log_gamma(double x) { return std::lgamma(x); }

}  // namespace detail

/// `docs` are bags of terms (stemmed, stop words removed); `doc_ids` label
/// them in exports.
inline TopicModel fit_lda(const std::vector<std::vector<std::string>>& docs, const LdaOptions& opt,
                          std::vector<std::string> doc_ids = {}) {
  if (opt.topics < 1) throw Error(ErrorKind::InvalidK, "number of topics must be >= 1");
  if (opt.iterations < 1) throw Error(ErrorKind::InvalidArgument, "iterations must be >= 1");
  std::map<std::string, std::size_t> vocab_index;
  for (const auto& d : docs)
    for (const auto& w : d) vocab_index.emplace(w, 0);
  if (vocab_index.empty()) throw Error(ErrorKind::EmptyVocabulary, "no terms to model");
  const std::size_t K = opt.topics;
  const std::size_t V = vocab_index.size();
  if (K > V)
    throw Error(ErrorKind::InvalidK,
                std::to_string(K) + " topics exceed vocabulary size " + std::to_string(V));

  TopicModel m;
  m.topics = K;
  m.alpha = opt.alpha.value_or(50.0 / static_cast<double>(K));
  m.beta = opt.beta;
  if (m.alpha <= 0 || m.beta <= 0) throw Error(ErrorKind::InvalidArgument, "alpha and beta must be positive");
  m.seed = opt.seed;
  m.iterations = opt.iterations;
  {
    std::size_t i = 0;
    for (auto& [w, idx] : vocab_index) {
      idx = i++;
      m.vocabulary.push_back(w);
    }
  }
  const std::size_t D = docs.size();
  if (doc_ids.size() != D) {
    doc_ids.clear();
    for (std::size_t d = 0; d < D; ++d) doc_ids.push_back(std::to_string(d));
  }
  m.documents = std::move(doc_ids);

  std::vector<std::vector<std::size_t>> words(D);
  std::vector<std::vector<std::size_t>> z(D);
  std::vector<std::size_t> n_dk(D * K, 0), n_kw(K * V, 0), n_k(K, 0), n_d(D, 0);
  Rng rng(opt.seed);
  for (std::size_t d = 0; d < D; ++d) {
    for (const auto& w : docs[d]) {
      const std::size_t wi = vocab_index.at(w);
      const std::size_t k = rng.below(K);
      words[d].push_back(wi);
      z[d].push_back(k);
      ++n_dk[d * K + k];
      ++n_kw[k * V + wi];
      ++n_k[k];
      ++n_d[d];
      ++m.token_count;
    }
  }

  const double alpha = m.alpha, beta = m.beta;
  const double vbeta = static_cast<double>(V) * beta;
  auto joint_log_likelihood = [&] {
    using detail::log_gamma;
    double ll = 0;
    // log p(w | z)
    ll += static_cast<double>(K) * (log_gamma(vbeta) - static_cast<double>(V) * log_gamma(beta));
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t w = 0; w < V; ++w)
        if (n_kw[k * V + w]) ll += log_gamma(static_cast<double>(n_kw[k * V + w]) + beta);
      ll += static_cast<double>(V - std::count_if(n_kw.begin() + static_cast<std::ptrdiff_t>(k * V),
                                                   n_kw.begin() + static_cast<std::ptrdiff_t>((k + 1) * V),
                                                   [](std::size_t c) { return c > 0; })) *
            log_gamma(beta);
      ll -= log_gamma(static_cast<double>(n_k[k]) + vbeta);
    }
    // log p(z)
    const double kalpha = static_cast<double>(K) * alpha;
    for (std::size_t d = 0; d < D; ++d) {
      ll += log_gamma(kalpha) - static_cast<double>(K) * log_gamma(alpha);
      for (std::size_t k = 0; k < K; ++k) ll += log_gamma(static_cast<double>(n_dk[d * K + k]) + alpha);
      ll -= log_gamma(static_cast<double>(n_d[d]) + kalpha);
    }
    return ll;
  };

  std::vector<double> weights(K);
  for (std::size_t it = 0; it < opt.iterations; ++it) {
    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t i = 0; i < words[d].size(); ++i) {
        const std::size_t w = words[d][i];
        std::size_t k = z[d][i];
        --n_dk[d * K + k];
        --n_kw[k * V + w];
        --n_k[k];
        double total = 0;
        for (std::size_t t = 0; t < K; ++t) {
          total += (static_cast<double>(n_dk[d * K + t]) + alpha) * (static_cast<double>(n_kw[t * V + w]) + beta) /
                   (static_cast<double>(n_k[t]) + vbeta);
          weights[t] = total;
        }
        const double u = rng.uniform() * total;
        k = 0;
        while (k + 1 < K && weights[k] <= u) ++k;
        z[d][i] = k;
        ++n_dk[d * K + k];
        ++n_kw[k * V + w];
        ++n_k[k];
      }
    }
    std::size_t assigned = 0;
    for (auto c : n_k) assigned += c;
    m.assignment_totals.push_back(assigned);
    m.log_likelihood.push_back(joint_log_likelihood());
  }

  m.phi.assign(K * V, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    double sum = 0;
    for (std::size_t w = 0; w < V; ++w) sum += m.phi[k * V + w] = static_cast<double>(n_kw[k * V + w]) + beta;
    for (std::size_t w = 0; w < V; ++w) m.phi[k * V + w] /= sum;
  }
  m.theta.assign(D * K, 0.0);
  for (std::size_t d = 0; d < D; ++d) {
    double sum = 0;
    for (std::size_t k = 0; k < K; ++k) sum += m.theta[d * K + k] = static_cast<double>(n_dk[d * K + k]) + alpha;
    for (std::size_t k = 0; k < K; ++k) m.theta[d * K + k] /= sum;
  }
  return m;
}

/// One LDA document per unit, using token stems.
inline TopicModel fit_lda(const TokenizedCorpus& corpus, const LdaOptions& opt) {
  std::vector<std::vector<std::string>> docs;
  std::vector<std::string> ids;
  for (const auto& u : corpus) {
    std::vector<std::string> terms;
    for (const auto& t : u.tokens) terms.push_back(t.stem);
    docs.push_back(std::move(terms));
    ids.push_back(u.key.to_string());
  }
  return fit_lda(docs, opt, std::move(ids));
}

/// The n most probable words of a topic; ties broken lexicographically.
inline std::vector<std::pair<std::string, double>> top_words(const TopicModel& m, std::size_t topic, std::size_t n) {
  if (topic >= m.topics) throw Error(ErrorKind::NotFound, "topic " + std::to_string(topic));
  std::vector<std::size_t> idx(m.vocabulary.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const double pa = m.phi_at(topic, a), pb = m.phi_at(topic, b);
    if (pa != pb) return pa > pb;
    return m.vocabulary[a] < m.vocabulary[b];
  });
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 0; i < std::min(n, idx.size()); ++i) out.emplace_back(m.vocabulary[idx[i]], m.phi_at(topic, idx[i]));
  return out;
}

// ---------------------------------------------------------------- export

inline nlohmann::json topic_model_metadata(const TopicModel& m) {
  return {{"K", m.topics},
          {"alpha", m.alpha},
          {"beta", m.beta},
          {"seed", m.seed},
          {"iterations", m.iterations},
          {"burn_in", m.iterations / 2},
          {"estimate", "final sampler state"},
          {"vocabulary_size", m.vocabulary.size()},
          {"documents", m.documents.size()},
          {"tokens", m.token_count},
          {"final_log_likelihood", m.log_likelihood.empty() ? 0.0 : m.log_likelihood.back()}};
}

inline Table phi_table(const TopicModel& m) {
  Table t;
  t.header = {"word"};
  for (std::size_t k = 0; k < m.topics; ++k) t.header.push_back("topic_" + std::to_string(k));
  for (std::size_t w = 0; w < m.vocabulary.size(); ++w) {
    std::vector<std::string> row{m.vocabulary[w]};
    for (std::size_t k = 0; k < m.topics; ++k) row.push_back(util::format_double(m.phi_at(k, w)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline Table theta_table(const TopicModel& m) {
  Table t;
  t.header = {"document"};
  for (std::size_t k = 0; k < m.topics; ++k) t.header.push_back("topic_" + std::to_string(k));
  for (std::size_t d = 0; d < m.documents.size(); ++d) {
    std::vector<std::string> row{m.documents[d]};
    for (std::size_t k = 0; k < m.topics; ++k) row.push_back(util::format_double(m.theta_at(d, k)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// Writes model.json (metadata), phi.csv and theta.csv into `dir`.
inline void save_topic_model(const TopicModel& m, const std::filesystem::path& dir) {
  util::write_file(dir / "model.json", topic_model_metadata(m).dump(2) + "\n");
  csv::write_table_file(dir / "phi.csv", phi_table(m));
  csv::write_table_file(dir / "theta.csv", theta_table(m));
}

inline TopicModel load_topic_model(const std::filesystem::path& dir) {
  auto meta = nlohmann::json::parse(util::read_file(dir / "model.json"));
  TopicModel m;
  m.topics = meta.at("K").get<std::size_t>();
  m.alpha = meta.at("alpha").get<double>();
  m.beta = meta.at("beta").get<double>();
  m.seed = meta.at("seed").get<std::uint64_t>();
  m.iterations = meta.at("iterations").get<std::size_t>();
  auto phi = csv::read_table_file(dir / "phi.csv");
  auto theta = csv::read_table_file(dir / "theta.csv");
  if (phi.header.size() != m.topics + 1 || theta.header.size() != m.topics + 1)
    throw Error(ErrorKind::FormatError, "topic tables disagree with K in model.json");
  auto num = [](const std::string& s) {
    auto v = util::parse_double(s);
    if (!v) throw Error(ErrorKind::FormatError, "not a number: " + s);
    return *v;
  };
  m.phi.assign(m.topics * phi.rows.size(), 0.0);
  for (std::size_t w = 0; w < phi.rows.size(); ++w) {
    m.vocabulary.push_back(phi.rows[w][0]);
    for (std::size_t k = 0; k < m.topics; ++k) m.phi[k * phi.rows.size() + w] = num(phi.rows[w][k + 1]);
  }
  for (const auto& row : theta.rows) {
    m.documents.push_back(row[0]);
    for (std::size_t k = 0; k < m.topics; ++k) m.theta.push_back(num(row[k + 1]));
  }
  return m;
}

}  // namespace ethnocode
