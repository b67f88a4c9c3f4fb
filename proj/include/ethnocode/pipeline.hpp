#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ethnocode/coder.hpp"
#include "ethnocode/config.hpp"
#include "ethnocode/corpus.hpp"
#include "ethnocode/embeddings.hpp"
#include "ethnocode/heatmap.hpp"
#include "ethnocode/review.hpp"
#include "ethnocode/semnet.hpp"
#include "ethnocode/textprep.hpp"
#include "ethnocode/topics.hpp"
#include "ethnocode/util.hpp"

#ifndef ETHNOCODE_VERSION
#define ETHNOCODE_VERSION "0.0.0"
#endif

namespace ethnocode {

inline std::string file_digest(const std::filesystem::path& p) { return util::hex64(util::fnv1a64(util::read_file(p))); }

/// Every regular file under `dir` (relative, generic form) with its digest,
/// excluding `skip`.
inline nlohmann::json tree_digests(const std::filesystem::path& dir, const std::string& skip = "") {
  std::map<std::string, std::string> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), dir).generic_string();
    if (rel != skip) files[rel] = file_digest(e.path());
  }
  return files;
}

inline CodeSeparator parse_separator(std::string_view s) {
  if (s == "newline" || s == "newline_in_cell") return CodeSeparator::newline_in_cell;
  if (s == "comma") return CodeSeparator::comma;
  if (s == "colon") return CodeSeparator::colon;
  throw Error(ErrorKind::ConfigError, "unknown code separator " + std::string(s));
}

/// "builtin", "none" or a path (relative to `base`).
inline std::optional<StopwordList> stopwords_from(const std::string& spec, const std::filesystem::path& base) {
  if (spec == "none") return std::nullopt;
  if (spec == "builtin") return StopwordList::builtin();
  return StopwordList::load(base / spec);
}

namespace detail {

template <class T>
T setting(const nlohmann::json& section, const char* key, T fallback) {
  if (!section.contains(key)) return fallback;
  try {
    return section.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::ConfigError, std::string("bad value for ") + key);
  }
}

inline nlohmann::json section_of(const nlohmann::json& cfg, const char* name) {
  return cfg.contains(name) ? cfg.at(name) : nlohmann::json::object();
}

template <class E, class F>
E enum_setting(const nlohmann::json& section, const char* key, E fallback, F parse) {
  if (!section.contains(key)) return fallback;
  auto v = parse(setting<std::string>(section, key, ""));
  if (!v) throw Error(ErrorKind::ConfigError, std::string("bad value for ") + key);
  return *v;
}

}  // namespace detail

/// Runs every stage of the workflow described by `config` and writes the
/// artifact tree under `out`. Relative paths in the config resolve against
/// `base`. Returns the manifest, which is also written to out/manifest.json.
inline nlohmann::json run_pipeline(const nlohmann::json& config, const std::filesystem::path& base,
                                   const std::filesystem::path& out) {
  using detail::section_of;
  using detail::setting;
  std::filesystem::create_directories(out);
  const auto seed = setting<std::uint64_t>(config, "seed", 20250101);
  nlohmann::json manifest{{"tool", "ethnocode"}, {"version", ETHNOCODE_VERSION}, {"config", config}};
  nlohmann::json stages = nlohmann::json::object();

  // corpus
  const auto corpus_cfg = section_of(config, "corpus");
  const auto table = setting<std::string>(corpus_cfg, "table", "");
  if (table.empty()) throw Error(ErrorKind::ConfigError, "[corpus] table is required");
  const auto sep = parse_separator(setting<std::string>(corpus_cfg, "separator", "newline"));
  const Corpus corpus = read_corpus_table(base / table, sep);
  manifest["inputs"] = {{table, file_digest(base / table)}};
  write_corpus_table(out / "corpus.csv", corpus);
  stages["corpus"] = {{"units", corpus.size()}, {"documents", corpus.documents().size()}};

  // text preparation
  const auto prep = section_of(config, "preprocess");
  TokenizedCorpus tokens = annotate(tokenize_corpus(corpus), AnnotationSource::builtin_lexicon());
  TokenizedCorpus content = tokens;
  if (auto sw = stopwords_from(setting<std::string>(prep, "stopwords", "builtin"), base))
    content = remove_stopwords(std::move(content), *sw);
  if (const auto min_count = setting<std::size_t>(prep, "phrases_min_count", 0); min_count > 0) {
    auto phrases = detect_phrases(content, min_count, setting<double>(prep, "phrases_pmi", 3.0));
    content = apply_phrases(std::move(content), phrases);
    stages["preprocess"]["phrases"] = phrases;
  }

  // topics
  std::optional<TopicModel> topics;
  if (config.contains("topics")) {
    const auto t = config.at("topics");
    LdaOptions opt;
    opt.topics = setting<std::size_t>(t, "k", opt.topics);
    opt.iterations = setting<std::size_t>(t, "iterations", opt.iterations);
    opt.beta = setting<double>(t, "beta", opt.beta);
    if (t.contains("alpha")) opt.alpha = setting<double>(t, "alpha", 0.1);
    opt.seed = setting<std::uint64_t>(t, "seed", seed);
    topics = fit_lda(content, opt);
    save_topic_model(*topics, out / "topics");
    Table top;
    top.header = {"topic", "rank", "word", "probability"};
    const auto n = setting<std::size_t>(t, "top_words", 10);
    for (std::size_t k = 0; k < topics->topics; ++k) {
      auto words = top_words(*topics, k, n);
      for (std::size_t r = 0; r < words.size(); ++r)
        top.rows.push_back({std::to_string(k), std::to_string(r + 1), words[r].first, util::format_double(words[r].second)});
    }
    csv::write_table_file(out / "topics" / "top_words.csv", top);
    stages["topics"] = {{"k", opt.topics}, {"seed", opt.seed}, {"final_log_likelihood", topics->log_likelihood.back()}};
  }

  // embeddings
  std::optional<WordVectors> vectors;
  if (config.contains("embeddings")) {
    const auto e = config.at("embeddings");
    SgnsOptions opt;
    opt.dim = setting<std::size_t>(e, "dim", 50);
    opt.window = setting<std::size_t>(e, "window", opt.window);
    opt.negatives = setting<std::size_t>(e, "negatives", opt.negatives);
    opt.epochs = setting<std::size_t>(e, "epochs", opt.epochs);
    opt.learning_rate = setting<double>(e, "learning_rate", opt.learning_rate);
    opt.seed = setting<std::uint64_t>(e, "seed", seed);
    vectors = train_sgns(content, opt);
    save_vectors(*vectors, out / "embeddings" / "vectors.vec");
    auto proj = project_svd(*vectors, 2);
    const auto k = std::min<std::size_t>(setting<std::size_t>(e, "clusters", 5), vectors->size());
    auto km = kmeans(vectors->matrix, k, opt.seed);
    csv::write_table_file(out / "embeddings" / "projection.csv",
                          projection_table(vectors->words, proj.coordinates, km.assignment));
    nlohmann::json clusters = nlohmann::json::array();
    for (const auto& words : central_words(*vectors, km, setting<std::size_t>(e, "central_words", 5)))
      clusters.push_back(words);
    util::write_file(out / "embeddings" / "clusters.json",
                     nlohmann::json{{"k", k}, {"wcss", km.wcss}, {"central_words", clusters}}.dump(2) + "\n");
    stages["embeddings"] = {{"words", vectors->size()}, {"dim", opt.dim}, {"seed", opt.seed}};
  }

  // semantic networks
  if (config.contains("semnet")) {
    const auto s = config.at("semnet");
    const auto scope = detail::enum_setting(s, "scope", Scope::sentence, [](const std::string& v) { return parse_scope(v); });
    const auto filter = TokenFilter::parse(setting<std::string>(s, "filter", "all"));
    auto g = build_cooccurrence(content, scope, filter);
    export_graph(g, GraphFormat::graphml, out / "semnet" / "cooccurrence.graphml");
    if (const auto top = setting<std::size_t>(s, "top_edges", 0); top > 0) g = prune(g, PrunePolicy::top_k_edges(top));
    if (const auto mw = setting<double>(s, "min_weight", 0); mw > 0) g = prune(g, PrunePolicy::min_weight(mw));
    nlohmann::json st{{"nodes", g.nodes.size()}, {"edges", g.edges.size()}};
    if (!g.nodes.empty()) {
      auto comm = detect_communities(g);
      g = with_clusters(std::move(g), comm.assignment);
      Table ct;
      ct.header = {"word", "community"};
      for (const auto& [w, c] : comm.assignment) ct.rows.push_back({w, std::to_string(c)});
      csv::write_table_file(out / "semnet" / "communities.csv", ct);
      st["communities"] = comm.count;
      st["modularity"] = comm.modularity;
    }
    export_graph(g, GraphFormat::graphml, out / "semnet" / "network.graphml");
    export_graph(g, GraphFormat::edge_list_csv, out / "semnet" / "edges.csv");
    export_graph(g, GraphFormat::dot, out / "semnet" / "network.dot");
    if (s.contains("seeds")) {
      auto seeds = setting<std::vector<std::string>>(s, "seeds", {});
      if (vectors && setting<std::size_t>(s, "expand", 0) > 0) {
        std::vector<std::string> expanded;
        for (const auto& e : expand_seeds(seeds, *vectors, setting<std::size_t>(s, "expand", 0)))
          expanded.push_back(e.word);
        seeds = expanded;
      }
      auto sg = build_seedword(content, seeds, setting<std::size_t>(s, "rounds", 2), scope,
                               setting<std::size_t>(s, "threshold", 2), filter);
      export_graph(sg, GraphFormat::graphml, out / "semnet" / "seedword.graphml");
      st["seedword_nodes"] = sg.nodes.size();
    }
    stages["semnet"] = st;
  }

  // heatmap
  if (config.contains("heatmap")) {
    const auto h = config.at("heatmap");
    const auto mode =
        detail::enum_setting(h, "mode", CellMode::binary, [](const std::string& v) { return parse_cell_mode(v); });
    auto attributes = setting<std::vector<std::string>>(h, "attributes", {});
    auto m = build_matrix(corpus, attributes, mode, topics ? &*topics : nullptr);
    const auto linkage =
        detail::enum_setting(h, "linkage", Linkage::average, [](const std::string& v) { return parse_linkage(v); });
    const auto metric =
        detail::enum_setting(h, "metric", default_metric(mode), [](const std::string& v) { return parse_metric(v); });
    const auto palette =
        detail::enum_setting(h, "palette", Palette::blues, [](const std::string& v) { return parse_palette(v); });
    csv::write_table_file(out / "heatmap" / "matrix.csv", matrix_table(m));
    auto rows = m.values.rows >= 2 ? hier_cluster(m, Axis::rows, linkage, metric) : Dendrogram{};
    auto cols = hier_cluster(m, Axis::columns, linkage, metric);
    const auto row_order = m.values.rows >= 2 ? rows.leaf_order : identity_order(m.values.rows);
    util::write_file(out / "heatmap" / "rows.json", merge_tree_json(rows).dump(2) + "\n");
    util::write_file(out / "heatmap" / "columns.json", merge_tree_json(cols).dump(2) + "\n");
    auto rendered = render_heatmap(m, row_order, cols.leaf_order, palette);
    util::write_file(out / "heatmap" / "heatmap.svg", rendered.svg);
    csv::write_table_file(out / "heatmap" / "ordered.csv", rendered.table);
    stages["heatmap"] = {{"attributes", m.values.rows}, {"respondents", m.values.cols}};
  }

  // coding and review
  if (config.contains("coding")) {
    const auto c = config.at("coding");
    auto round_cfg = coding_round_config(c);
    if (!c.contains("seed")) round_cfg.train.options.seed = seed;
    if (!c.contains("split_seed")) round_cfg.split_seed = seed;
    const auto codes = setting<std::vector<std::string>>(c, "codes", {});
    const auto uncoded_docs = setting<std::vector<std::string>>(c, "uncoded_documents", {});
    std::set<UnitKey> uncoded;
    for (const auto& d : uncoded_docs)
      for (const auto& u : corpus.document_units(d)) uncoded.insert(u.key());
    const std::string project_id = setting<std::string>(section_of(config, "review"), "project", "project");
    const auto project_dir = out / "review" / project_id;
    nlohmann::json settings = c;
    settings["seed"] = round_cfg.train.options.seed;
    settings["split_seed"] = round_cfg.split_seed;
    Project::create(project_dir, project_id, corpus, codes, {uncoded_docs.begin(), uncoded_docs.end()}, settings);
    Project project(project_dir);
    Corpus coded = corpus;
    const auto raw_tokens = tokenize_corpus(corpus);
    nlohmann::json st = nlohmann::json::object();
    for (const auto& code : codes) {
      auto round = run_coding_round(corpus, raw_tokens, code, uncoded, round_cfg);
      const auto dir = out / "coding" / code;
      util::write_file(dir / "split.json", to_json(round.split).dump(1) + "\n");
      save_code_model(round.model, dir / "model");
      auto report = to_json(round.report);
      report["threshold"] = round.model.threshold;
      util::write_file(dir / "report.json", report.dump(2) + "\n");
      csv::write_table_file(dir / "predictions.csv", predictions_table(code, round.predictions));
      util::write_file(dir / "queue.json", to_json(round.queue).dump(1) + "\n");
      coded = with_machine_codes(coded, code, round.predictions);
      st[code] = {{"f1", round.report.f1},
                  {"recall", round.report.recall},
                  {"precision", round.report.precision},
                  {"alpha", report["alpha"]},
                  {"queue", round.queue.items.size()}};
      project.commit_round(code, std::move(round));
    }
    write_corpus_table(out / "coded" / "corpus.csv", coded);
    csv::write_table_file(out / "coded" / "assignments.csv", assignments_table(coded));
    stages["coding"] = st;
  }

  manifest["stages"] = stages;
  manifest["outputs"] = tree_digests(out, "manifest.json");
  util::write_file(out / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

inline nlohmann::json run_pipeline_file(const std::filesystem::path& config_path, const std::filesystem::path& out) {
  auto config = parse_config(util::read_file(config_path));
  return run_pipeline(config, config_path.parent_path(), out);
}

}  // namespace ethnocode
