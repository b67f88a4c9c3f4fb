#include <csignal>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ethnocode/pipeline.hpp"
#include "ethnocode/review_service.hpp"

namespace fs = std::filesystem;
using namespace ethnocode;
using nlohmann::json;

namespace {

struct Common {
  unsigned threads = 1;
  std::string separator = "newline";
};

json digests(const std::vector<fs::path>& paths) {
  json out = json::object();
  for (const auto& p : paths)
    if (fs::is_regular_file(p)) out[p.filename().string()] = file_digest(p);
  return out;
}

/// `<out>.manifest.json` next to a file output, or manifest.json inside a
/// directory output.
void write_manifest(const fs::path& out, const std::string& command, const json& params,
                    const std::vector<fs::path>& inputs) {
  json m{{"tool", "ethnocode"}, {"version", ETHNOCODE_VERSION}, {"command", command}, {"parameters", params},
         {"inputs", digests(inputs)}};
  fs::path target;
  if (fs::is_directory(out)) {
    m["outputs"] = tree_digests(out, "manifest.json");
    target = out / "manifest.json";
  } else {
    m["outputs"] = digests({out});
    target = out;
    target += ".manifest.json";
  }
  util::write_file(target, m.dump(2) + "\n");
}

std::vector<std::string> comma_list(const std::string& s) {
  std::vector<std::string> out;
  for (const auto& part : util::split(s, ","))
    if (auto t = util::trim(part); !t.empty()) out.emplace_back(t);
  return out;
}

template <class T>
T require(std::optional<T> v, const std::string& what) {
  if (!v) throw Error(ErrorKind::InvalidArgument, "unknown " + what);
  return *v;
}

TokenizedCorpus content_tokens(const Corpus& corpus, const std::string& stopwords) {
  auto tokens = annotate(tokenize_corpus(corpus), AnnotationSource::builtin_lexicon());
  if (auto sw = stopwords_from(stopwords, fs::current_path())) tokens = remove_stopwords(std::move(tokens), *sw);
  return tokens;
}

std::map<UnitKey, int> label_file(const fs::path& path, const std::optional<std::string>& code, CodeSeparator sep) {
  if (code) return human_labels(read_corpus_table(path, sep), *code);
  auto t = csv::read_table_file(path);
  auto ui = t.column("unit"), li = t.column("label");
  if (!ui || !li) throw Error(ErrorKind::FormatError, path.string() + " needs unit and label columns");
  std::map<UnitKey, int> out;
  for (const auto& row : t.rows) {
    auto k = UnitKey::parse(row[*ui]);
    auto v = util::parse_int(row[*li]);
    if (!k || !v) throw Error(ErrorKind::FormatError, "bad row in " + path.string());
    out[*k] = static_cast<int>(*v);
  }
  return out;
}

std::atomic<ReviewService*> g_service{nullptr};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Computational coding of qualitative interview corpora"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(ETHNOCODE_VERSION));
  Common common;
  app.add_option("--threads", common.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--separator", common.separator, "Code separator in corpus tables: newline, comma or colon");

  std::function<void()> action;
  auto sep = [&] { return parse_separator(common.separator); };

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Build a corpus table from a directory of transcripts");
  std::string in_dir, out_path, granularity = "paragraph";
  ingest->add_option("dir", in_dir)->required();
  ingest->add_option("-o,--out", out_path)->required();
  ingest->add_option("--granularity", granularity)->check(CLI::IsMember({"paragraph", "document"}));
  ingest->callback([&] {
    action = [&] {
      auto corpus = ingest_directory(in_dir, granularity == "document" ? Granularity::document : Granularity::paragraph);
      write_corpus_table(out_path, corpus, sep());
      write_manifest(out_path, "ingest", {{"granularity", granularity}, {"separator", common.separator}}, {});
      std::cout << corpus.size() << " units from " << corpus.documents().size() << " documents\n";
    };
  });

  // export-table / import-table
  std::string in_path, to_separator = "newline";
  auto* exp = app.add_subcommand("export-table", "Write a corpus table with another code separator");
  exp->add_option("corpus", in_path)->required();
  exp->add_option("-o,--out", out_path)->required();
  exp->add_option("--to-separator", to_separator);
  exp->callback([&] {
    action = [&] {
      auto corpus = read_corpus_table(in_path, sep());
      write_corpus_table(out_path, corpus, parse_separator(to_separator));
      write_manifest(out_path, "export-table", {{"separator", common.separator}, {"to_separator", to_separator}},
                     {in_path});
    };
  });
  auto* imp = app.add_subcommand("import-table", "Read a coded table and write the canonical corpus table");
  imp->add_option("table", in_path)->required();
  imp->add_option("-o,--out", out_path)->required();
  imp->callback([&] {
    action = [&] {
      auto corpus = read_corpus_table(in_path, sep());
      write_corpus_table(out_path, corpus);
      write_manifest(out_path, "import-table", {{"separator", common.separator}}, {in_path});
      std::cout << corpus.size() << " units, " << corpus.codebook().size() << " codes\n";
    };
  });

  // topics
  auto* topics = app.add_subcommand("topics", "Topic models");
  topics->require_subcommand(1);
  std::string stopwords = "builtin", model_dir;
  LdaOptions lda;
  double lda_alpha = 0;
  std::size_t top_n = 10;
  auto* tfit = topics->add_subcommand("fit", "Fit an LDA model");
  tfit->add_option("corpus", in_path)->required();
  tfit->add_option("-o,--out", out_path)->required();
  tfit->add_option("-k,--topics", lda.topics)->check(CLI::PositiveNumber);
  tfit->add_option("--iterations", lda.iterations);
  tfit->add_option("--alpha", lda_alpha);
  tfit->add_option("--beta", lda.beta);
  tfit->add_option("--seed", lda.seed);
  tfit->add_option("--stopwords", stopwords, "builtin, none or a file");
  tfit->callback([&] {
    action = [&] {
      if (lda_alpha > 0) lda.alpha = lda_alpha;
      auto m = fit_lda(content_tokens(read_corpus_table(in_path, sep()), stopwords), lda);
      save_topic_model(m, out_path);
      write_manifest(out_path, "topics fit", topic_model_metadata(m), {in_path});
    };
  });
  auto* tshow = topics->add_subcommand("show", "Print the top words of each topic");
  tshow->add_option("model", model_dir)->required();
  tshow->add_option("-n", top_n);
  tshow->callback([&] {
    action = [&] {
      auto m = load_topic_model(model_dir);
      for (std::size_t k = 0; k < m.topics; ++k) {
        std::cout << k << ":";
        for (const auto& [w, p] : top_words(m, k, top_n)) std::cout << ' ' << w;
        std::cout << '\n';
      }
    };
  });

  // embeddings
  auto* embed = app.add_subcommand("embed", "Word embeddings");
  embed->require_subcommand(1);
  SgnsOptions sgns;
  sgns.dim = 50;
  std::string vectors_path, word;
  std::size_t k_clusters = 5, n_neighbors = 10;
  std::uint64_t seed = 1;
  auto* etrain = embed->add_subcommand("train", "Train skip-gram vectors");
  etrain->add_option("corpus", in_path)->required();
  etrain->add_option("-o,--out", out_path)->required();
  etrain->add_option("--dim", sgns.dim);
  etrain->add_option("--window", sgns.window);
  etrain->add_option("--negatives", sgns.negatives);
  etrain->add_option("--epochs", sgns.epochs);
  etrain->add_option("--learning-rate", sgns.learning_rate);
  etrain->add_option("--subsample", sgns.subsample);
  etrain->add_option("--seed", sgns.seed);
  etrain->add_option("--stopwords", stopwords);
  etrain->callback([&] {
    action = [&] {
      auto v = train_sgns(content_tokens(read_corpus_table(in_path, sep()), stopwords), sgns);
      save_vectors(v, out_path);
      write_manifest(out_path, "embed train",
                     {{"dim", sgns.dim}, {"window", sgns.window}, {"negatives", sgns.negatives},
                      {"epochs", sgns.epochs}, {"learning_rate", sgns.learning_rate}, {"seed", sgns.seed}},
                     {in_path});
    };
  });
  auto* eload = embed->add_subcommand("load", "Check a vector file and print its shape");
  eload->add_option("vectors", vectors_path)->required();
  eload->callback([&] {
    action = [&] {
      auto v = load_vectors(vectors_path);
      std::cout << v.size() << " words, dim " << v.dim << '\n';
    };
  });
  auto* eproj = embed->add_subcommand("project", "2-D SVD projection with k-means clusters");
  eproj->add_option("vectors", vectors_path)->required();
  eproj->add_option("-o,--out", out_path)->required();
  eproj->add_option("-k,--clusters", k_clusters);
  eproj->add_option("--seed", seed);
  eproj->callback([&] {
    action = [&] {
      auto v = load_vectors(vectors_path);
      auto p = project_svd(v, 2);
      auto km = kmeans(v.matrix, k_clusters, seed);
      csv::write_table_file(out_path, projection_table(v.words, p.coordinates, km.assignment));
      write_manifest(out_path, "embed project", {{"k", k_clusters}, {"seed", seed}}, {vectors_path});
    };
  });
  auto* eclus = embed->add_subcommand("cluster", "k-means over the word vectors");
  eclus->add_option("vectors", vectors_path)->required();
  eclus->add_option("-o,--out", out_path)->required();
  eclus->add_option("-k,--clusters", k_clusters);
  eclus->add_option("--seed", seed);
  eclus->add_option("-n", n_neighbors, "central words per cluster");
  eclus->callback([&] {
    action = [&] {
      auto v = load_vectors(vectors_path);
      auto km = kmeans(v.matrix, k_clusters, seed);
      json assignment = json::object();
      for (std::size_t i = 0; i < v.size(); ++i) assignment[v.words[i]] = km.assignment[i];
      json j{{"k", k_clusters},         {"seed", seed},
             {"wcss", km.wcss},         {"converged", km.converged},
             {"assignment", assignment}, {"central_words", central_words(v, km, n_neighbors)}};
      util::write_file(out_path, j.dump(2) + "\n");
      write_manifest(out_path, "embed cluster", {{"k", k_clusters}, {"seed", seed}}, {vectors_path});
    };
  });
  auto* enb = embed->add_subcommand("neighbors", "Nearest words by cosine similarity");
  enb->add_option("vectors", vectors_path)->required();
  enb->add_option("word", word)->required();
  enb->add_option("-n", n_neighbors);
  enb->callback([&] {
    action = [&] {
      for (const auto& [w, sim] : neighbors(load_vectors(vectors_path), word, n_neighbors))
        std::cout << w << '\t' << util::format_double(sim) << '\n';
    };
  });

  // semantic networks
  auto* semnet = app.add_subcommand("semnet", "Semantic networks");
  semnet->require_subcommand(1);
  std::string scope = "sentence", filter = "all", seeds, graph_path, format = "graphml";
  std::size_t rounds = 2, top_edges = 0, top_nodes = 0;
  double threshold = 2, min_weight = 0;
  auto graph_format = [&] {
    if (format == "graphml") return GraphFormat::graphml;
    if (format == "csv" || format == "edges") return GraphFormat::edge_list_csv;
    if (format == "dot") return GraphFormat::dot;
    throw Error(ErrorKind::InvalidArgument, "unknown graph format " + format);
  };
  auto* sbuild = semnet->add_subcommand("build", "Co-occurrence network");
  sbuild->add_option("corpus", in_path)->required();
  sbuild->add_option("-o,--out", out_path)->required();
  sbuild->add_option("--scope", scope);
  sbuild->add_option("--filter", filter);
  sbuild->add_option("--stopwords", stopwords);
  sbuild->add_option("--format", format);
  sbuild->callback([&] {
    action = [&] {
      auto g = build_cooccurrence(content_tokens(read_corpus_table(in_path, sep()), stopwords),
                                  require(parse_scope(scope), "scope"), TokenFilter::parse(filter));
      export_graph(g, graph_format(), out_path);
      write_manifest(out_path, "semnet build", {{"scope", scope}, {"filter", filter}, {"stopwords", stopwords}},
                     {in_path});
    };
  });
  auto* sseed = semnet->add_subcommand("seed", "Seed-word network");
  sseed->add_option("corpus", in_path)->required();
  sseed->add_option("-o,--out", out_path)->required();
  sseed->add_option("--seeds", seeds, "comma-separated seed words")->required();
  sseed->add_option("--rounds", rounds);
  sseed->add_option("--threshold", threshold);
  sseed->add_option("--scope", scope);
  sseed->add_option("--filter", filter);
  sseed->add_option("--stopwords", stopwords);
  sseed->add_option("--format", format);
  sseed->add_option("--vectors", vectors_path, "expand seeds with their nearest neighbors");
  sseed->add_option("--expand", n_neighbors);
  sseed->callback([&] {
    action = [&] {
      auto list = comma_list(seeds);
      if (!vectors_path.empty()) {
        std::vector<std::string> expanded;
        for (const auto& e : expand_seeds(list, load_vectors(vectors_path), n_neighbors)) expanded.push_back(e.word);
        list = expanded;
      }
      auto g = build_seedword(content_tokens(read_corpus_table(in_path, sep()), stopwords), list, rounds,
                              require(parse_scope(scope), "scope"), threshold, TokenFilter::parse(filter));
      export_graph(g, graph_format(), out_path);
      write_manifest(out_path, "semnet seed",
                     {{"seeds", list}, {"rounds", rounds}, {"threshold", threshold}, {"scope", scope}}, {in_path});
    };
  });
  auto* sprune = semnet->add_subcommand("prune", "Drop weak edges or nodes");
  sprune->add_option("graph", graph_path)->required();
  sprune->add_option("-o,--out", out_path)->required();
  auto* mw = sprune->add_option("--min-weight", min_weight);
  auto* te = sprune->add_option("--top-edges", top_edges);
  auto* tn = sprune->add_option("--top-nodes", top_nodes);
  mw->excludes(te)->excludes(tn);
  te->excludes(tn);
  sprune->callback([&] {
    action = [&] {
      PrunePolicy policy = top_edges   ? PrunePolicy::top_k_edges(top_edges)
                           : top_nodes ? PrunePolicy::top_k_nodes_by_strength(top_nodes)
                                       : PrunePolicy::min_weight(min_weight);
      auto g = prune(read_graphml(graph_path), policy);
      export_graph(g, GraphFormat::graphml, out_path);
      write_manifest(out_path, "semnet prune",
                     {{"min_weight", min_weight}, {"top_edges", top_edges}, {"top_nodes", top_nodes}}, {graph_path});
    };
  });
  auto* scomm = semnet->add_subcommand("communities", "Modularity communities");
  std::string graph_out;
  bool collapse = false;
  scomm->add_option("graph", graph_path)->required();
  scomm->add_option("-o,--out", out_path, "word,community table")->required();
  scomm->add_option("--graph-out", graph_out, "graph with cluster attributes");
  scomm->add_flag("--collapse", collapse, "write one node per community to --graph-out");
  scomm->callback([&] {
    action = [&] {
      auto g = read_graphml(graph_path);
      auto c = detect_communities(g);
      Table t;
      t.header = {"word", "community"};
      for (const auto& [w, k] : c.assignment) t.rows.push_back({w, std::to_string(k)});
      csv::write_table_file(out_path, t);
      if (!graph_out.empty())
        export_graph(collapse ? collapse_clusters(g, c.assignment) : with_clusters(g, c.assignment),
                     GraphFormat::graphml, graph_out);
      write_manifest(out_path, "semnet communities", {{"count", c.count}, {"modularity", c.modularity}},
                     {graph_path});
      std::cout << c.count << " communities, modularity " << util::format_double(c.modularity) << '\n';
    };
  });
  auto* sexp = semnet->add_subcommand("export", "Convert a graph to graphml, csv or dot");
  sexp->add_option("graph", graph_path)->required();
  sexp->add_option("-o,--out", out_path)->required();
  sexp->add_option("--format", format);
  sexp->callback([&] {
    action = [&] {
      export_graph(read_graphml(graph_path), graph_format(), out_path);
      write_manifest(out_path, "semnet export", {{"format", format}}, {graph_path});
    };
  });

  // heatmap
  auto* heat = app.add_subcommand("heatmap", "Attribute-by-respondent heatmaps");
  heat->require_subcommand(1);
  std::string attributes, mode = "binary", linkage = "average", metric, palette = "blues", axis = "rows", matrix_path,
                          rows_tree, cols_tree;
  std::size_t cut = 0;
  auto cell_mode = [&] { return require(parse_cell_mode(mode), "cell mode"); };
  auto* hbuild = heat->add_subcommand("build", "Count attributes per respondent");
  hbuild->add_option("corpus", in_path)->required();
  hbuild->add_option("-o,--out", out_path)->required();
  hbuild->add_option("--attributes", attributes, "comma-separated codes, meta:Key=Value or topic:k")->required();
  hbuild->add_option("--mode", mode);
  hbuild->add_option("--topics", model_dir);
  hbuild->callback([&] {
    action = [&] {
      std::optional<TopicModel> tm;
      if (!model_dir.empty()) tm = load_topic_model(model_dir);
      auto m = build_matrix(read_corpus_table(in_path, sep()), comma_list(attributes), cell_mode(), tm ? &*tm : nullptr);
      csv::write_table_file(out_path, matrix_table(m));
      write_manifest(out_path, "heatmap build", {{"attributes", comma_list(attributes)}, {"mode", mode}}, {in_path});
    };
  });
  auto* hclus = heat->add_subcommand("cluster", "Hierarchical clustering of rows or columns");
  hclus->add_option("matrix", matrix_path)->required();
  hclus->add_option("-o,--out", out_path)->required();
  hclus->add_option("--mode", mode);
  hclus->add_option("--axis", axis)->check(CLI::IsMember({"rows", "columns"}));
  hclus->add_option("--linkage", linkage);
  hclus->add_option("--metric", metric);
  hclus->add_option("--cut", cut, "number of flat clusters to report");
  hclus->callback([&] {
    action = [&] {
      auto m = matrix_from_table(csv::read_table_file(matrix_path), cell_mode());
      auto met = metric.empty() ? default_metric(cell_mode()) : require(parse_metric(metric), "metric");
      auto d = hier_cluster(m, axis == "rows" ? Axis::rows : Axis::columns, require(parse_linkage(linkage), "linkage"),
                            met);
      auto j = merge_tree_json(d);
      j["leaf_order"] = d.leaf_order;
      if (cut > 0) j["clusters"] = cut_tree(d, cut);
      util::write_file(out_path, j.dump(2) + "\n");
      write_manifest(out_path, "heatmap cluster", {{"axis", axis}, {"linkage", linkage}, {"mode", mode}},
                     {matrix_path});
    };
  });
  auto* hrender = heat->add_subcommand("render", "Render the matrix as SVG");
  hrender->add_option("matrix", matrix_path)->required();
  hrender->add_option("-o,--out", out_path)->required();
  hrender->add_option("--mode", mode);
  hrender->add_option("--rows", rows_tree, "row tree from heatmap cluster");
  hrender->add_option("--columns", cols_tree, "column tree from heatmap cluster");
  hrender->add_option("--palette", palette);
  hrender->callback([&] {
    action = [&] {
      auto m = matrix_from_table(csv::read_table_file(matrix_path), cell_mode());
      auto order = [](const std::string& tree, std::size_t n) {
        if (tree.empty()) return identity_order(n);
        return json::parse(util::read_file(tree)).at("leaf_order").get<std::vector<std::size_t>>();
      };
      auto r = render_heatmap(m, order(rows_tree, m.values.rows), order(cols_tree, m.values.cols),
                              require(parse_palette(palette), "palette"));
      util::write_file(out_path, r.svg);
      write_manifest(out_path, "heatmap render", {{"palette", palette}}, {matrix_path});
    };
  });

  // coding
  auto* code = app.add_subcommand("code", "Supervised coding of uncoded units");
  code->require_subcommand(1);
  std::string code_name, split_path, predictions_path, a_path, b_path, documents, representation = "tfidf",
                                                                            classifier = "logistic_regression";
  double fraction = 0.25, target_recall = 0.95;
  CodeTrainConfig train_cfg;
  std::uint64_t split_seed = 1;
  auto* csplit = code->add_subcommand("split", "Stratified train/eval split of the coded units");
  csplit->add_option("corpus", in_path)->required();
  csplit->add_option("--code", code_name)->required();
  csplit->add_option("-o,--out", out_path)->required();
  csplit->add_option("--fraction", fraction);
  csplit->add_option("--seed", split_seed);
  csplit->callback([&] {
    action = [&] {
      auto s = split_train_eval(read_corpus_table(in_path, sep()), code_name, fraction, split_seed);
      util::write_file(out_path, to_json(s).dump(1) + "\n");
      write_manifest(out_path, "code split", {{"code", code_name}, {"fraction", fraction}, {"seed", split_seed}},
                     {in_path});
      std::cout << s.train.size() << " train, " << s.eval.size() << " eval\n";
    };
  });
  auto add_model_options = [&](CLI::App* c) {
    c->add_option("--representation", representation);
    c->add_option("--classifier", classifier);
    c->add_option("--negative-ratio", train_cfg.negative_ratio);
    c->add_option("--epochs", train_cfg.options.epochs);
    c->add_option("--learning-rate", train_cfg.options.learning_rate);
    c->add_option("--l2", train_cfg.options.l2);
    c->add_option("--batch-size", train_cfg.options.batch_size);
    c->add_option("--seed", train_cfg.options.seed);
    c->add_option("--embeddings", vectors_path, "unit embedding sidecar");
  };
  auto* ctrain = code->add_subcommand("train", "Train a model on the split's training units");
  ctrain->add_option("corpus", in_path)->required();
  ctrain->add_option("--code", code_name)->required();
  ctrain->add_option("--split", split_path)->required();
  ctrain->add_option("-o,--out", out_path, "model directory")->required();
  add_model_options(ctrain);
  ctrain->callback([&] {
    action = [&] {
      auto corpus = read_corpus_table(in_path, sep());
      auto split = split_from_json(json::parse(util::read_file(split_path)));
      train_cfg.representation = require(parse_representation(representation), "representation");
      train_cfg.options.kind = require(parse_classifier(classifier), "classifier");
      std::optional<UnitEmbeddings> emb;
      if (!vectors_path.empty()) emb = load_unit_embeddings(vectors_path, corpus);
      const auto tokens = tokenize_corpus(corpus);
      auto m = train_code_model(code_name, UnitIndex(tokens), split.train, human_labels(corpus, code_name), train_cfg,
                                split.id, emb ? &*emb : nullptr);
      save_code_model(m, out_path);
      write_manifest(out_path, "code train",
                     {{"code", code_name}, {"representation", representation}, {"classifier", classifier},
                      {"seed", train_cfg.options.seed}, {"split", split.id}},
                     {in_path, split_path});
    };
  });
  auto* ctune = code->add_subcommand("tune", "Pick the threshold reaching a target recall on the eval units");
  ctune->add_option("corpus", in_path)->required();
  ctune->add_option("--model", model_dir)->required();
  ctune->add_option("--split", split_path)->required();
  ctune->add_option("--target-recall", target_recall);
  ctune->add_option("--embeddings", vectors_path);
  ctune->callback([&] {
    action = [&] {
      auto corpus = read_corpus_table(in_path, sep());
      auto m = load_code_model(model_dir);
      auto split = split_from_json(json::parse(util::read_file(split_path)));
      std::optional<UnitEmbeddings> emb;
      if (!vectors_path.empty()) emb = load_unit_embeddings(vectors_path, corpus);
      const auto tokens = tokenize_corpus(corpus);
      UnitIndex index(tokens);
      auto labels = human_labels(corpus, m.code);
      std::vector<double> scores;
      std::vector<int> gold;
      for (const auto& k : split.eval) {
        scores.push_back(m.score(index.at(k), emb ? &*emb : nullptr));
        gold.push_back(labels.at(k));
      }
      auto t = tune_threshold(scores, gold, target_recall);
      m.threshold = t.threshold;
      save_code_model(m, model_dir);
      write_manifest(model_dir, "code tune", {{"target_recall", target_recall}, {"threshold", t.threshold}},
                     {in_path, split_path});
      std::cout << "threshold " << util::format_double(t.threshold) << " recall " << util::format_double(t.recall)
                << " precision " << util::format_double(t.precision) << '\n';
    };
  });
  auto* capply = code->add_subcommand("apply", "Score units with a trained model");
  capply->add_option("corpus", in_path)->required();
  capply->add_option("--model", model_dir)->required();
  capply->add_option("-o,--out", out_path)->required();
  capply->add_option("--documents", documents, "comma-separated document ids (default: all units without a label)");
  capply->add_option("--split", split_path, "score the split's eval units instead");
  capply->add_option("--embeddings", vectors_path);
  capply->callback([&] {
    action = [&] {
      auto corpus = read_corpus_table(in_path, sep());
      auto m = load_code_model(model_dir);
      std::optional<UnitEmbeddings> emb;
      if (!vectors_path.empty()) emb = load_unit_embeddings(vectors_path, corpus);
      const auto tokens = tokenize_corpus(corpus);
      UnitIndex index(tokens);
      std::vector<UnitKey> targets;
      if (!split_path.empty()) {
        targets = split_from_json(json::parse(util::read_file(split_path))).eval;
      } else if (!documents.empty()) {
        for (const auto& d : comma_list(documents))
          for (const auto& u : corpus.document_units(d)) targets.push_back(u.key());
      } else {
        auto labels = human_labels(corpus, m.code);
        std::set<std::string> coded_docs;
        for (const auto& u : corpus.units())
          if (!u.codes.empty()) coded_docs.insert(u.doc_id);
        for (const auto& u : corpus.units())
          if (!coded_docs.count(u.doc_id)) targets.push_back(u.key());
      }
      auto preds = apply_codes(m, index.select(targets), emb ? &*emb : nullptr);
      csv::write_table_file(out_path, predictions_table(m.code, preds));
      write_manifest(out_path, "code apply", {{"code", m.code}, {"threshold", m.threshold}, {"units", preds.size()}},
                     {in_path});
    };
  });
  auto* ceval = code->add_subcommand("eval", "Compare predictions with human labels");
  ceval->add_option("corpus", in_path)->required();
  ceval->add_option("--code", code_name)->required();
  ceval->add_option("--predictions", predictions_path)->required();
  ceval->add_option("-o,--out", out_path);
  ceval->callback([&] {
    action = [&] {
      auto corpus = read_corpus_table(in_path, sep());
      auto preds = predictions_from_table(csv::read_table_file(predictions_path));
      auto r = evaluate(preds, human_labels(corpus, code_name), code_name,
                        util::hex64(util::fnv1a64(util::read_file(predictions_path))));
      auto j = to_json(r);
      if (!out_path.empty()) {
        util::write_file(out_path, j.dump(2) + "\n");
        write_manifest(out_path, "code eval", {{"code", code_name}}, {in_path, predictions_path});
      }
      std::cout << j.dump(2) << '\n';
    };
  });
  auto* calpha = code->add_subcommand("alpha", "Krippendorff's alpha between two binary codings");
  calpha->add_option("--a", a_path, "unit,label CSV or corpus table")->required();
  calpha->add_option("--b", b_path)->required();
  calpha->add_option("--code", code_name, "read both files as corpus tables for this code");
  calpha->callback([&] {
    action = [&] {
      std::optional<std::string> c;
      if (!code_name.empty()) c = code_name;
      auto a = label_file(a_path, c, sep());
      auto b = label_file(b_path, c, sep());
      std::vector<int> va, vb;
      for (const auto& [k, v] : a)
        if (auto it = b.find(k); it != b.end()) {
          va.push_back(v);
          vb.push_back(it->second);
        }
      std::cout << util::format_double(krippendorff_alpha(va, vb)) << '\n';
    };
  });

  // review
  auto* review = app.add_subcommand("review", "Review projects and the review service");
  review->require_subcommand(1);
  ServiceOptions service;
  std::string project_id, codes, config_path;
  auto* rinit = review->add_subcommand("init", "Create a review project and its first queues");
  rinit->add_option("corpus", in_path)->required();
  rinit->add_option("--id", project_id)->required();
  rinit->add_option("--codes", codes)->required();
  rinit->add_option("--uncoded-documents", documents)->required();
  rinit->add_option("--data-dir", service.data_dir)->required();
  rinit->add_option("--config", config_path, "[coding] settings");
  rinit->callback([&] {
    action = [&] {
      auto corpus = read_corpus_table(in_path, sep());
      json settings = json::object();
      if (!config_path.empty()) {
        auto cfg = parse_config(util::read_file(config_path));
        if (cfg.contains("coding")) settings = cfg.at("coding");
      }
      auto docs = comma_list(documents);
      const auto dir = fs::path(service.data_dir) / project_id;
      Project::create(dir, project_id, corpus, comma_list(codes), {docs.begin(), docs.end()}, settings);
      Project p(dir);
      for (const auto& c : comma_list(codes)) std::cout << c << ": queue v" << retrain(p, c) << '\n';
    };
  });
  auto* rserve = review->add_subcommand("serve", "Serve the review API and UI bundle");
  rserve->add_option("--data-dir", service.data_dir)->required();
  rserve->add_option("--ui-dir", service.ui_dir);
  rserve->add_option("--bind", service.bind);
  rserve->add_option("--port", service.port);
  rserve->callback([&] {
    action = [&] {
      ReviewService s(service);
      const int port = s.bind();
      g_service = &s;
      std::signal(SIGINT, [](int) {
        if (auto* p = g_service.load()) p->stop();
      });
      std::signal(SIGTERM, [](int) {
        if (auto* p = g_service.load()) p->stop();
      });
      std::cout << "listening on http://" << service.bind << ':' << port << "/api/v1" << std::endl;
      s.serve();
      g_service = nullptr;
    };
  });

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "Config-driven runs");
  pipeline->require_subcommand(1);
  auto* prun = pipeline->add_subcommand("run", "Run every configured stage");
  prun->add_option("config", config_path)->required()->check(CLI::ExistingFile);
  prun->add_option("-o,--out", out_path)->required();
  prun->callback([&] {
    action = [&] {
      auto m = run_pipeline_file(config_path, out_path);
      std::cout << m["stages"].dump(2) << '\n';
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  try {
    if (action) action();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
