// End-to-end runs of the installed binary: the toy pipeline from corpus
// generation through training, sampling, evaluation, and scaffolding, plus
// the error-reporting contract (nonzero exit, "error [<Kind>]:" on stderr).

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "plfm/common.hpp"

#ifndef PLFM_BIN
#error "PLFM_BIN must point at the command line binary"
#endif

namespace {

using nlohmann::json;

struct RunResult {
  int exit_code = -1;
  std::string out, err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string scratch_root() {
  static const std::string root = "/tmp/plfm_cli_" + std::to_string(getpid());
  return root;
}

RunResult run(const std::string& args) {
  const std::string out_path = scratch_root() + "/cmd.out";
  const std::string err_path = scratch_root() + "/cmd.err";
  const std::string cmd =
      std::string(PLFM_BIN) + " " + args + " > " + out_path + " 2> " + err_path;
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  return r;
}

bool exists(const std::string& path) { return std::ifstream(path).good(); }

}  // namespace

TEST_CASE("toy pipeline runs end to end") {
  const std::string root = scratch_root();
  std::system(("rm -rf " + root + " && mkdir -p " + root).c_str());

  // Corpus.
  RunResult r = run("toys --out " + root + "/toys --count 6 --length 8 --seed 5");
  REQUIRE(r.exit_code == 0);
  REQUIRE(exists(root + "/toys/toy_0000.pdb"));
  REQUIRE(exists(root + "/toys/toys.manifest.json"));

  // Manifests are append-only: a second run in the same directory picks the
  // next free name instead of overwriting.
  r = run("toys --out " + root + "/toys --count 1 --length 8 --seed 6");
  REQUIRE(r.exit_code == 0);
  CHECK(exists(root + "/toys/toys.manifest-1.json"));

  // Index.
  r = run("ingest " + root + "/toys --out " + root + "/index.json");
  REQUIRE(r.exit_code == 0);
  const json idx = json::parse(slurp(root + "/index.json"));
  CHECK(idx.at("files").size() == 7);

  // Tiny models; a few steps only proves the plumbing.
  const std::string tiny =
      " --c-seq 16 --c-pair 8 --layers 1 --heads 2 --batch 2 --steps 3 --log-every 1";
  r = run("train-vae --data " + root + "/index.json --out " + root + "/vae.ckpt --curves " +
          root + "/vae_curves.csv --seed 7" + tiny);
  REQUIRE(r.exit_code == 0);
  REQUIRE(exists(root + "/vae.ckpt"));
  CHECK(exists(root + "/vae.manifest.json"));
  {
    std::ifstream curves(root + "/vae_curves.csv");
    std::string header;
    std::getline(curves, header);
    CHECK(header == "step,total,ce,coord_mse,kl");
  }

  r = run("train-flow --data " + root + "/index.json --vae " + root + "/vae.ckpt --out " + root +
          "/flow.ckpt --curves " + root + "/flow_curves.csv --seed 8" + tiny);
  REQUIRE(r.exit_code == 0);
  REQUIRE(exists(root + "/flow.ckpt"));

  // Resuming appends to the curve file instead of rewriting the header; the
  // step budget is a total, so 3 done + target 5 trains two more.
  r = run("train-vae --data " + root + "/index.json --out " + root + "/vae.ckpt --resume" +
          " --curves " + root + "/vae_curves.csv --seed 7 --steps 5 --log-every 1 --batch 2");
  REQUIRE(r.exit_code == 0);
  {
    std::ifstream curves(root + "/vae_curves.csv");
    std::string line;
    int headers = 0, rows = 0;
    while (std::getline(curves, line)) {
      if (line.rfind("step,", 0) == 0)
        ++headers;
      else if (!line.empty())
        ++rows;
    }
    CHECK(headers == 1);
    CHECK(rows == 5);
  }

  // Sampling.
  r = run("sample --vae " + root + "/vae.ckpt --flow " + root + "/flow.ckpt --out " + root +
          "/samples --lengths 8 --count 2 --steps 4 --seed 9");
  REQUIRE(r.exit_code == 0);
  REQUIRE(exists(root + "/samples/sample_L008_0000.pdb"));
  REQUIRE(exists(root + "/samples/sample_L008_0001.pdb"));

  // Evaluation with the identity oracle: refolding returns the sample, so
  // everything is codesignable by construction.
  r = run("metrics --samples " + root + "/samples --out " + root + "/metrics --oracle identity");
  REQUIRE(r.exit_code == 0);
  const json metrics = json::parse(slurp(root + "/metrics.json"));
  CHECK(metrics.at("n_samples") == 2);
  CHECK(metrics.at("codesignable_fraction") == 1.0);
  CHECK(metrics.at("producer_manifest") == "sample.manifest.json");
  CHECK(exists(root + "/metrics.csv"));
  CHECK(exists(root + "/metrics.chi.csv"));

  // Motif scaffolding in replay mode closes the loop exactly.
  {
    json task{{"name", "demo"},
              {"min_length", 8},
              {"max_length", 12},
              {"contig_all_atom", "2-4/A3-6/2-4"},
              {"reference_pdb", "toys/toy_0000.pdb"}};
    json tasks{{"tasks", json::array({task})}};
    std::ofstream out(root + "/tasks.json");
    out << tasks.dump(2) << "\n";
  }
  r = run("motif --tasks " + root + "/tasks.json --out " + root + "/motif --samples 3 --seed 10" +
          " --mode replay --oracle identity");
  REQUIRE(r.exit_code == 0);
  const json motif = json::parse(slurp(root + "/motif.json"));
  CHECK(motif.at("tasks").at(0).at("samples") == 3);
  CHECK(motif.at("tasks").at(0).at("successes") == 3);
  {
    std::ifstream csv(root + "/motif.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header ==
          "task,sample,length,seq_recovered,ca_rmsd,ca_ok,scope_rmsd,scope_ok,sc_rmsd,"
          "codesignable,success");
  }

  std::system(("rm -rf " + root).c_str());
}

TEST_CASE("contig-parse prints the parsed segments") {
  std::system(("mkdir -p " + scratch_root()).c_str());
  const RunResult r = run("contig-parse 5-20/A1-20/10-25/B1-20/5-20");
  REQUIRE(r.exit_code == 0);
  const json parsed = json::parse(r.out);
  CHECK(parsed.at("segments").size() == 5);
  CHECK(parsed.at("motif_residues") == 40);
  CHECK(parsed.at("motif_segments") == 2);
  CHECK(parsed.at("rendered") == "5-20/A1-20/10-25/B1-20/5-20");
}

TEST_CASE("errors land on stderr with a kind and a nonzero exit") {
  std::system(("mkdir -p " + scratch_root()).c_str());

  RunResult r = run("train-vae --data /nonexistent/index.json --out /tmp/never.ckpt");
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("error [MissingDataset]") != std::string::npos);

  r = run("sample --vae /nonexistent/vae.ckpt --flow /nonexistent/flow.ckpt --out /tmp/never");
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("error [MissingCheckpoint]") != std::string::npos);

  r = run("ingest /nonexistent/corpus --out /tmp/never.json");
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("error [EmptyDataset]") != std::string::npos);

  r = run("motif --tasks /nonexistent/tasks.json --out /tmp/never");
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("error [MissingReference]") != std::string::npos);

  r = run("contig-parse 20-5");
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("error [ParseError]") != std::string::npos);

  // No subcommand at all is a usage error handled by the parser.
  r = run("");
  CHECK(r.exit_code != 0);

  std::system(("rm -rf " + scratch_root()).c_str());
}
