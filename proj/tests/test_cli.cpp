#include <catch_amalgamated.hpp>

#include <cstdio>
#include <sys/wait.h>

#include "ethnocode/config.hpp"
#include "ethnocode/pipeline.hpp"
#include "test_support.hpp"

using namespace ethnocode;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run cli(const std::string& args, const testsupport::TempDir& tmp) {
  const auto err_path = tmp / "stderr.txt";
  const std::string cmd = std::string("\"") + ETHNOCODE_CLI + "\" " + args + " 2> \"" + err_path.string() + "\"";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = util::read_file(err_path);
  return r;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

const fs::path kDemo = fs::path(ETHNOCODE_REPO_DATA) / "demo";

ErrorKind config_error(std::string_view text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected a config error");
  return ErrorKind::InvalidArgument;
}

}  // namespace

TEST_CASE("config subset parsing", "[config]") {
  auto c = parse_config(R"(# leading comment
seed = 7
name = "a # not a comment"

[topics]
k = 4          # trailing comment
beta = 0.01
on = true
codes = ["Pain", "Family Support", "a, b"]
empty = []
"quoted key" = "tab\there"
)");
  CHECK(c["seed"] == 7);
  CHECK(c["name"] == "a # not a comment");
  CHECK(c["topics"]["k"] == 4);
  CHECK(c["topics"]["beta"].get<double>() == 0.01);
  CHECK(c["topics"]["on"] == true);
  CHECK(c["topics"]["codes"] == json::array({"Pain", "Family Support", "a, b"}));
  CHECK(c["topics"]["empty"].empty());
  CHECK(c["topics"]["quoted key"] == "tab\there");
  CHECK(parse_config("").empty());
  CHECK(parse_config("a = 1\r\nb = 2\r\n")["b"] == 2);

  CHECK(config_error("a = 1\na = 2") == ErrorKind::ConfigError);
  CHECK(config_error("[s]\n[s]") == ErrorKind::ConfigError);
  CHECK(config_error("just words") == ErrorKind::ConfigError);
  CHECK(config_error("a = \"open") == ErrorKind::ConfigError);
  CHECK(config_error("a = [1, 2") == ErrorKind::ConfigError);
  CHECK(config_error("a = bare") == ErrorKind::ConfigError);
  CHECK(config_error("[]") == ErrorKind::ConfigError);
  try {
    parse_config("a = 1\n\nb =\n");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("the demo config parses and names real documents", "[config]") {
  auto c = parse_config(util::read_file(kDemo / "demo.toml"));
  auto corpus = read_corpus_table(kDemo / c["corpus"]["table"].get<std::string>());
  for (const auto& d : c["coding"]["uncoded_documents"]) {
    REQUIRE(corpus.documents().count(d.get<std::string>()));
    for (const auto& u : corpus.document_units(d.get<std::string>())) CHECK(u.codes.empty());
  }
  for (const auto& code : c["coding"]["codes"]) CHECK(corpus.codebook().count(code.get<std::string>()));
}

TEST_CASE("pipeline config errors", "[pipeline]") {
  testsupport::TempDir tmp;
  auto kind = [&](const json& cfg) {
    try {
      run_pipeline(cfg, kDemo, tmp / "out");
    } catch (const Error& e) {
      return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::InvalidArgument;
  };
  CHECK(kind(json::object()) == ErrorKind::ConfigError);
  CHECK(kind({{"corpus", {{"table", "corpus.csv"}, {"separator", "pipe"}}}}) == ErrorKind::ConfigError);
  CHECK(kind({{"corpus", {{"table", "corpus.csv"}}}, {"heatmap", {{"mode", "loud"}}}}) == ErrorKind::ConfigError);
  CHECK(kind({{"corpus", {{"table", "corpus.csv"}}}, {"topics", {{"k", "four"}}}}) == ErrorKind::ConfigError);

  auto m = run_pipeline({{"corpus", {{"table", "corpus.csv"}}}}, kDemo, tmp / "bare");
  CHECK(m["outputs"].size() == 1);
  CHECK(m["inputs"].contains("corpus.csv"));
  CHECK(util::read_file(tmp / "bare" / "manifest.json").find(tmp.path().string()) == std::string::npos);
}

TEST_CASE("cli usage and error exits", "[cli]") {
  testsupport::TempDir tmp;
  CHECK(cli("", tmp).code == 2);
  CHECK(cli("frobnicate", tmp).code == 2);
  CHECK(cli("topics fit", tmp).code == 2);
  CHECK(cli("--help", tmp).code == 0);
  CHECK(cli("--version", tmp).out.find(ETHNOCODE_VERSION) != std::string::npos);

  auto missing = cli("import-table " + q(tmp / "nope.csv") + " -o " + q(tmp / "x.csv"), tmp);
  CHECK(missing.code == 1);
  CHECK(missing.err.rfind("error: IoError: ", 0) == 0);
  CHECK(std::count(missing.err.begin(), missing.err.end(), '\n') == 1);

  util::write_file(tmp / "bad.toml", "[corpus]\ntable = \"corpus.csv\"\ntable = \"again.csv\"\n");
  auto bad = cli("pipeline run " + q(tmp / "bad.toml") + " -o " + q(tmp / "out"), tmp);
  CHECK(bad.code == 1);
  CHECK(bad.err.rfind("error: ConfigError: line 3", 0) == 0);
}

TEST_CASE("cli stages over the demo corpus", "[cli]") {
  testsupport::TempDir tmp;
  const auto corpus = q(kDemo / "corpus.csv");
  auto ok = [&](const std::string& args) {
    auto r = cli(args, tmp);
    INFO(args << "\n" << r.err);
    REQUIRE(r.code == 0);
    return r;
  };
  auto manifest_of = [](const fs::path& out) {
    return json::parse(util::read_file(fs::is_directory(out) ? out / "manifest.json" : fs::path(out.string() + ".manifest.json")));
  };

  SECTION("ingest and tables") {
    auto r = ok("ingest " + q(kDemo / "raw") + " -o " + q(tmp / "raw.csv"));
    CHECK(r.out.find("4 documents") != std::string::npos);
    auto ingested = read_corpus_table(tmp / "raw.csv");
    CHECK(ingested.documents().count("4001_20110401_DD_interview"));
    CHECK(ingested.documents().at("4002_20110404_AK_interview").participant_id == "4002");
    CHECK(manifest_of(tmp / "raw.csv")["command"] == "ingest");

    ok("export-table " + corpus + " -o " + q(tmp / "comma.csv") + " --to-separator comma");
    ok("--separator comma import-table " + q(tmp / "comma.csv") + " -o " + q(tmp / "back.csv"));
    CHECK(read_corpus_table(tmp / "back.csv") == read_corpus_table(kDemo / "corpus.csv"));
    CHECK(manifest_of(tmp / "back.csv")["inputs"].contains("comma.csv"));
  }

  SECTION("topics, embeddings, networks, heatmaps") {
    ok("topics fit " + corpus + " -o " + q(tmp / "topics") + " -k 3 --iterations 50 --seed 4");
    auto show = ok("topics show " + q(tmp / "topics") + " -n 4");
    CHECK(std::count(show.out.begin(), show.out.end(), '\n') == 3);
    CHECK(manifest_of(tmp / "topics")["outputs"].contains("phi.csv"));

    ok("embed train " + corpus + " -o " + q(tmp / "v.vec") + " --dim 12 --epochs 2 --seed 3");
    CHECK(ok("embed load " + q(tmp / "v.vec")).out.find("dim 12") != std::string::npos);
    ok("embed project " + q(tmp / "v.vec") + " -o " + q(tmp / "proj.csv") + " -k 3");
    ok("embed cluster " + q(tmp / "v.vec") + " -o " + q(tmp / "clusters.json") + " -k 3");
    CHECK(json::parse(util::read_file(tmp / "clusters.json"))["central_words"].size() == 3);
    CHECK(!ok("embed neighbors " + q(tmp / "v.vec") + " pain -n 3").out.empty());

    ok("semnet build " + corpus + " -o " + q(tmp / "g.graphml"));
    ok("semnet prune " + q(tmp / "g.graphml") + " -o " + q(tmp / "p.graphml") + " --top-edges 40");
    CHECK(read_graphml(tmp / "p.graphml").edges.size() <= 40);
    ok("semnet communities " + q(tmp / "p.graphml") + " -o " + q(tmp / "comm.csv") + " --graph-out " +
       q(tmp / "c.graphml"));
    ok("semnet export " + q(tmp / "c.graphml") + " -o " + q(tmp / "c.dot") + " --format dot");
    CHECK(util::read_file(tmp / "c.dot").rfind("graph", 0) == 0);
    ok("semnet seed " + corpus + " -o " + q(tmp / "s.graphml") + " --seeds pain,bill --rounds 2 --threshold 2");
    CHECK(cli("semnet prune " + q(tmp / "g.graphml") + " -o x --top-edges 3 --min-weight 2", tmp).code == 2);

    ok("heatmap build " + corpus + " -o " + q(tmp / "m.csv") +
       " --attributes \"Pain,Cost,Family Support,meta:Location=Home,topic:0\" --mode proportion --topics " +
       q(tmp / "topics"));
    ok("heatmap cluster " + q(tmp / "m.csv") + " --mode proportion --axis rows --cut 2 -o " + q(tmp / "rows.json"));
    ok("heatmap cluster " + q(tmp / "m.csv") + " --mode proportion --axis columns -o " + q(tmp / "cols.json"));
    CHECK(json::parse(util::read_file(tmp / "rows.json"))["clusters"].size() == 5);
    ok("heatmap render " + q(tmp / "m.csv") + " --mode proportion --rows " + q(tmp / "rows.json") + " --columns " +
       q(tmp / "cols.json") + " -o " + q(tmp / "h.svg"));
    CHECK(util::read_file(tmp / "h.svg").rfind("<svg", 0) == 0);
  }

  SECTION("coding commands") {
    ok("code split " + corpus + " --code Pain --fraction 0.5 --seed 2 -o " + q(tmp / "split.json"));
    ok("code train " + corpus + " --code Pain --split " + q(tmp / "split.json") + " -o " + q(tmp / "model"));
    auto tune = ok("code tune " + corpus + " --model " + q(tmp / "model") + " --split " + q(tmp / "split.json"));
    CHECK(tune.out.rfind("threshold ", 0) == 0);
    ok("code apply " + corpus + " --model " + q(tmp / "model") + " --split " + q(tmp / "split.json") + " -o " +
       q(tmp / "eval_preds.csv"));
    auto report = ok("code eval " + corpus + " --code Pain --predictions " + q(tmp / "eval_preds.csv") + " -o " +
                     q(tmp / "report.json"));
    CHECK(json::parse(util::read_file(tmp / "report.json"))["recall"].get<double>() >= 0.95);
    ok("code apply " + corpus + " --model " + q(tmp / "model") + " -o " + q(tmp / "preds.csv"));
    auto preds = predictions_from_table(csv::read_table_file(tmp / "preds.csv"));
    for (const auto& p : preds) CHECK(std::stoi(p.unit.doc_id.substr(0, 4)) >= 4019);

    auto same = ok("code alpha --a " + corpus + " --b " + corpus + " --code Pain");
    CHECK(same.out == "1\n");
    util::write_file(tmp / "a.csv", "unit,label\nd#0,1\nd#1,0\nd#2,1\nd#3,0\n");
    util::write_file(tmp / "b.csv", "unit,label\nd#0,1\nd#1,1\nd#2,1\nd#3,0\nd#9,1\n");
    auto alpha = ok("code alpha --a " + q(tmp / "a.csv") + " --b " + q(tmp / "b.csv"));
    std::vector<int> a{1, 0, 1, 0}, b{1, 1, 1, 0};
    CHECK(std::stod(alpha.out) == Catch::Approx(krippendorff_alpha(a, b)).margin(1e-12));
  }

  SECTION("review init") {
    auto r = ok("review init " + corpus + " --id demo --codes Pain --uncoded-documents 4019_20110401_DD,4020_20110404_AK" +
                " --data-dir " + q(tmp / "projects") + " --config " + q(kDemo / "demo.toml"));
    CHECK(r.out == "Pain: queue v1\n");
    Project p(tmp / "projects" / "demo");
    CHECK(p.queue("Pain").version == 1);
    CHECK(p.settings()["train_fraction"] == 0.25);
  }
}
