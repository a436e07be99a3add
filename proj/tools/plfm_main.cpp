// Command-line surface for the pipeline: dataset generation and ingestion,
// two-stage training, sampling, motif scaffolding, and metric reports. Every
// run that produces files also writes a manifest recording the resolved
// configuration, master seed, input hashes, and artifact paths.
//
// Seeds: one master --seed expands into per-subsystem streams by forking the
// RNG with a string label ("sample-<length>-<index>", "vae-data", ...), so
// any sample can be regenerated in isolation.
//
// Paths: when PLFM_DATA_ROOT is set, relative paths resolve beneath it.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "plfm/common.hpp"
#include "plfm/flow.hpp"
#include "plfm/manifest.hpp"
#include "plfm/metrics.hpp"
#include "plfm/motif.hpp"
#include "plfm/protein.hpp"
#include "plfm/sampler.hpp"
#include "plfm/vae.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace plfm;

namespace {

std::string resolve_path(const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  if (const char* root = std::getenv("PLFM_DATA_ROOT")) return (fs::path(root) / p).string();
  return p;
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// Manifests are append-only; pick the first free name.
std::string fresh_manifest_path(const fs::path& dir, const std::string& stem) {
  for (int i = 0;; ++i) {
    fs::path p = dir / (i == 0 ? stem + ".manifest.json"
                               : stem + ".manifest-" + std::to_string(i) + ".json");
    if (!fs::exists(p)) return p.string();
  }
}

void emit_manifest(const std::string& command, const json& config, uint64_t seed,
                   const std::vector<std::string>& input_paths,
                   const std::vector<std::string>& artifacts, double wall,
                   const std::string& manifest_path) {
  RunManifest m;
  m.command = command;
  m.config_json = config.dump();
  m.master_seed = seed;
  for (const auto& p : input_paths) m.inputs.emplace_back(p, hash_hex(fnv1a64_file(p)));
  m.artifacts = artifacts;
  m.wall_seconds = wall;
  m.version = version;
  write_manifest(manifest_path, m);
}

json read_json_file(const std::string& path, const char* missing_kind) {
  std::ifstream in(path);
  if (!in) throw Error(missing_kind, path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("MalformedRecord", path + ": " + e.what());
  }
  return j;
}

// Dataset index as written by cmd_ingest; file paths are stored relative to
// the index's directory unless absolute.
std::vector<ProteinStructure> load_dataset(const std::string& index_path) {
  const json idx = read_json_file(index_path, "MissingDataset");
  const fs::path base = fs::path(index_path).parent_path();
  std::vector<ProteinStructure> data;
  for (const auto& f : idx.at("files")) {
    fs::path p = f.at("path").get<std::string>();
    if (!p.is_absolute()) p = base / p;
    data.push_back(parse_pdb_file(p.string()));
  }
  if (data.empty()) throw Error("EmptyDataset", index_path + " lists no files");
  return data;
}

void require_file(const std::string& path, const char* kind) {
  if (!fs::exists(path)) throw Error(kind, path);
}

// Applies config-file values beneath explicit flags: defaults < file < flags.
class ConfigLayer {
 public:
  void load(const std::string& path) {
    if (!path.empty()) cfg_ = read_json_file(resolve_path(path), "MissingDataset");
  }
  template <typename T>
  void apply(const CLI::Option* opt, const char* key, T& var) const {
    if (opt->count() == 0 && cfg_.contains(key)) var = cfg_.at(key).get<T>();
  }

 private:
  json cfg_ = json::object();
};

template <typename Fn>
void parallel_for(int n, int workers, Fn fn) {
  if (workers <= 0) workers = int(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, n));
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex err_mu;
  std::string first_err;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (first_err.empty()) first_err = e.what();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (!first_err.empty()) throw Error("WorkerFailure", first_err);
}

std::vector<std::string> sorted_pdb_files(const std::string& dir) {
  if (!fs::is_directory(dir)) throw Error("EmptyDataset", dir + " is not a directory");
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".pdb") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  return files;
}

std::unique_ptr<FoldOracle> make_oracle(const std::string& spec, const ProteinStructure& sample) {
  if (spec == "identity") return std::make_unique<IdentityOracle>(sample);
  if (spec.rfind("command:", 0) == 0) return std::make_unique<CommandOracle>(spec.substr(8));
  throw Error("OracleFailure", "unknown oracle spec '" + spec + "'");
}

json net_flags_json(const NetConfig& c) {
  return {{"c_seq", c.c_seq},    {"c_pair", c.c_pair},        {"n_layers", c.n_layers},
          {"n_heads", c.n_heads}, {"time_embed_dim", c.time_embed_dim}};
}

void append_curves(const std::string& path, const std::vector<TrainCurveRow>& rows,
                   const char* header) {
  const bool fresh = !fs::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("FileNotFound", "cannot write " + path);
  if (fresh) out << header << "\n";
  for (const auto& r : rows)
    out << r.step << "," << r.total << "," << r.ce << "," << r.coord_mse << "," << r.kl << "\n";
}

// ---------------------------------------------------------------- commands

int cmd_toys(const std::string& out_dir, int count, int length, uint64_t seed,
             double chi_noise, double fixed_chi_deg, bool has_fixed_chi) {
  Stopwatch watch;
  fs::create_directories(out_dir);
  ToyProteinConfig cfg;
  cfg.chi_noise_rad = chi_noise;
  if (has_fixed_chi) cfg.fixed_chi_deg = fixed_chi_deg;

  // Like the manifests, output files are append-only: a second run into the
  // same directory continues numbering instead of clobbering earlier toys.
  auto slot_path = [&](int idx) {
    char name[32];
    std::snprintf(name, sizeof name, "toy_%04d.pdb", idx);
    return (fs::path(out_dir) / name).string();
  };
  int next = 0;
  for (const auto& entry : fs::directory_iterator(out_dir)) {
    const std::string stem = entry.path().filename().string();
    int idx = -1;
    if (std::sscanf(stem.c_str(), "toy_%4d.pdb", &idx) == 1) next = std::max(next, idx + 1);
  }

  Rng master(seed);
  std::vector<std::string> artifacts;
  for (int i = 0; i < count; ++i) {
    Rng rng = master.fork("toy-" + std::to_string(i));
    const ProteinStructure p = make_toy_protein(length, rng, cfg);
    const std::string path = slot_path(next + i);
    write_pdb_file(p, path);
    artifacts.push_back(path);
  }
  json config{{"count", count},
              {"length", length},
              {"chi_noise", chi_noise},
              {"fixed_chi_deg", has_fixed_chi ? json(fixed_chi_deg) : json()}};
  emit_manifest("toys", config, seed, {}, artifacts, watch.seconds(),
                fresh_manifest_path(out_dir, "toys"));
  std::printf("wrote %d toy structures to %s\n", count, out_dir.c_str());
  return 0;
}

int cmd_ingest(const std::string& dir, const std::string& out, int min_len, int max_len,
               double min_b) {
  Stopwatch watch;
  json files = json::array(), rejects = json::array();
  for (const auto& path : sorted_pdb_files(dir)) {
    std::string reason;
    try {
      const ProteinStructure p = parse_pdb_file(path);
      if (p.length() < min_len || p.length() > max_len) {
        reason = "length";
      } else {
        double mean_b = 0;
        for (double b : p.b_factor) mean_b += b;
        mean_b /= p.length();
        if (mean_b < min_b) {
          reason = "b_factor";
        } else {
          files.push_back({{"path", fs::absolute(path).string()},
                           {"length", p.length()},
                           {"mean_b", mean_b}});
        }
      }
    } catch (const Error& e) {
      reason = std::string("parse:") + e.kind;
    }
    if (!reason.empty()) rejects.push_back({{"path", path}, {"reason", reason}});
  }
  if (files.empty()) throw Error("EmptyDataset", "no PDB files in " + dir + " pass the filters");

  const json index{{"files", files}, {"rejects", rejects}};
  std::ofstream os(out);
  if (!os) throw Error("FileNotFound", "cannot write " + out);
  os << index.dump(2) << "\n";
  os.close();

  json config{{"dir", dir}, {"min_length", min_len}, {"max_length", max_len}, {"min_b", min_b}};
  emit_manifest("ingest", config, 0, {}, {out}, watch.seconds(),
                fresh_manifest_path(fs::path(out).parent_path(), fs::path(out).stem().string()));
  std::printf("indexed %zu files (%zu rejected) -> %s\n", files.size(), rejects.size(),
              out.c_str());
  return 0;
}

int cmd_train_vae(const std::string& data, const std::string& out, const std::string& curves,
                  VaeConfig vcfg, VaeTrainConfig tcfg, uint64_t seed, bool resume) {
  Stopwatch watch;
  require_file(data, "MissingDataset");
  const auto dataset = load_dataset(data);

  std::vector<std::string> inputs{data};
  TrainState state;
  std::unique_ptr<Vae> vae;
  if (resume && fs::exists(out)) {
    inputs.push_back(out);
    vae = std::make_unique<Vae>(load_vae(out, &state));
    std::printf("resuming from %s at step %lld\n", out.c_str(), (long long)state.step);
  } else {
    vcfg.seed = seed;
    vae = std::make_unique<Vae>(vcfg);
    state.rng = Rng(seed).fork("vae-data");
  }

  Ema ema{tcfg.ema_decay, {}};
  const auto rows = train_vae(*vae, dataset, tcfg, state, tcfg.ema_decay > 0 ? &ema : nullptr);
  if (ema.enabled()) ema.swap(vae->trainable()); // checkpoint the averaged weights
  save_vae(out, *vae, &state);
  if (ema.enabled()) ema.swap(vae->trainable());
  const std::string curve_path = curves.empty() ? out + ".curves.csv" : curves;
  append_curves(curve_path, rows, "step,total,ce,coord_mse,kl");

  json config{{"data", data},       {"steps", tcfg.steps},   {"batch", tcfg.batch_size},
              {"lr", tcfg.lr},      {"ema", tcfg.ema_decay}, {"beta", vae->config().beta},
              {"fully_latent", vae->config().fully_latent},
              {"encoder", net_flags_json(vae->config().encoder)},
              {"decoder", net_flags_json(vae->config().decoder)},
              {"resume", resume}};
  emit_manifest("train-vae", config, seed, inputs, {out, curve_path}, watch.seconds(),
                fresh_manifest_path(fs::path(out).parent_path(), fs::path(out).stem().string()));
  if (!rows.empty())
    std::printf("step %lld: total %.4f ce %.4f coord %.4f kl %.2f\n",
                (long long)rows.back().step, rows.back().total, rows.back().ce,
                rows.back().coord_mse, rows.back().kl);
  return 0;
}

int cmd_train_flow(const std::string& data, const std::string& vae_path, const std::string& out,
                   const std::string& curves, NetConfig ncfg, FlowTrainConfig tcfg,
                   uint64_t seed, bool resume) {
  Stopwatch watch;
  require_file(data, "MissingDataset");
  require_file(vae_path, "MissingCheckpoint");
  const auto dataset = load_dataset(data);
  const Vae vae = load_vae(vae_path);

  std::vector<std::string> inputs{data, vae_path};
  TrainState state;
  std::unique_ptr<FlowModel> model;
  if (resume && fs::exists(out)) {
    inputs.push_back(out);
    model = std::make_unique<FlowModel>(load_flow(out, &state));
    std::printf("resuming from %s at step %lld\n", out.c_str(), (long long)state.step);
  } else {
    model = std::make_unique<FlowModel>(ncfg, seed);
    state.rng = Rng(seed).fork("flow-data");
  }

  Ema ema{tcfg.ema_decay, {}};
  const auto rows =
      train_flow(*model, vae, dataset, tcfg, state, tcfg.ema_decay > 0 ? &ema : nullptr);
  if (ema.enabled()) ema.swap(model->net().params());
  save_flow(out, *model, &state);
  if (ema.enabled()) ema.swap(model->net().params());
  const std::string curve_path = curves.empty() ? out + ".curves.csv" : curves;
  append_curves(curve_path, rows, "step,total,coord,latent,extra");

  json config{{"data", data},     {"vae", vae_path},      {"steps", tcfg.steps},
              {"batch", tcfg.batch_size}, {"lr", tcfg.lr}, {"ema", tcfg.ema_decay},
              {"net", net_flags_json(model->config())},    {"resume", resume}};
  emit_manifest("train-flow", config, seed, inputs, {out, curve_path}, watch.seconds(),
                fresh_manifest_path(fs::path(out).parent_path(), fs::path(out).stem().string()));
  if (!rows.empty())
    std::printf("step %lld: total %.4f coord %.4f latent %.4f\n", (long long)rows.back().step,
                rows.back().total, rows.back().ce, rows.back().coord_mse);
  return 0;
}

json sampler_config_json(const SamplerConfig& cfg) {
  return {{"n_steps", cfg.n_steps},
          {"schedule_x", to_string(cfg.schedule_x)},
          {"schedule_z", to_string(cfg.schedule_z)},
          {"scaling_x", to_string(cfg.langevin_x)},
          {"scaling_z", to_string(cfg.langevin_z)},
          {"eta_x", cfg.eta_x},
          {"eta_z", cfg.eta_z},
          {"langevin_x", cfg.use_langevin_x},
          {"langevin_z", cfg.use_langevin_z},
          {"seed", cfg.seed}};
}

int cmd_sample(const std::string& vae_path, const std::string& flow_path,
               const std::string& out_dir, const std::vector<int>& lengths, int count,
               SamplerConfig scfg, int workers) {
  Stopwatch watch;
  require_file(vae_path, "MissingCheckpoint");
  require_file(flow_path, "MissingCheckpoint");
  const Vae vae = load_vae(vae_path);
  const FlowModel model = load_flow(flow_path);
  fs::create_directories(out_dir);

  struct Job {
    int length, index;
    std::string path;
  };
  std::vector<Job> jobs;
  for (int length : lengths)
    for (int i = 0; i < count; ++i) {
      char name[48];
      std::snprintf(name, sizeof name, "sample_L%03d_%04d.pdb", length, i);
      jobs.push_back({length, i, (fs::path(out_dir) / name).string()});
    }

  Rng master(scfg.seed);
  parallel_for(int(jobs.size()), workers, [&](int j) {
    Rng rng = master.fork("sample-" + std::to_string(jobs[j].length) + "-" +
                          std::to_string(jobs[j].index));
    const ProteinStructure p = generate(model, vae, jobs[j].length, scfg, rng);
    write_pdb_file(p, jobs[j].path);
  });

  std::vector<std::string> artifacts;
  for (const auto& j : jobs) artifacts.push_back(j.path);
  json config = sampler_config_json(scfg);
  config["lengths"] = lengths;
  config["count"] = count;
  config["vae"] = vae_path;
  config["flow"] = flow_path;
  emit_manifest("sample", config, scfg.seed, {vae_path, flow_path}, artifacts, watch.seconds(),
                fresh_manifest_path(out_dir, "sample"));
  std::printf("wrote %zu samples to %s\n", jobs.size(), out_dir.c_str());
  return 0;
}

// Replay generation for the motif closed loop: the reference motif embedded
// verbatim into an inert CA-only scaffold laid out far from the motif.
ProteinStructure replay_generated(const MotifTask& task, const Placement& placement) {
  ProteinStructure p = ProteinStructure::empty(placement.total_length);
  for (int i = 0; i < p.length(); ++i) {
    p.seq[i] = ResidueType::GLY;
    p.set_atom(i, slot_CA, Vec3{3.8 * i, 60.0, 0.0});
  }
  int k = 0;
  for (const auto& seg : task.motif_segments)
    for (int i = 0; i < seg.length(); ++i, ++k) {
      const int pos = placement.positions[k];
      p.seq[pos] = seg.seq[i];
      for (int s = 0; s < num_atom_slots; ++s) {
        p.mask[size_t(pos) * num_atom_slots + s] = 0;
        p.xyz[size_t(pos) * num_atom_slots + s] = Vec3{0, 0, 0};
        if (seg.has_atom(i, s)) p.set_atom(pos, s, seg.atom(i, s));
      }
    }
  return p;
}

int cmd_motif(const std::string& tasks_path, const std::string& out_prefix, int samples,
              uint64_t seed, MotifDetail detail, MotifIndexing indexing,
              const std::string& gen_mode, const std::string& vae_path,
              const std::string& flow_path, const std::string& oracle_spec, int workers,
              SamplerConfig scfg) {
  Stopwatch watch;
  require_file(tasks_path, "MissingReference");
  const json jtasks = read_json_file(tasks_path, "MissingReference");
  const fs::path base = fs::path(tasks_path).parent_path();

  std::unique_ptr<Vae> vae;
  std::unique_ptr<FlowModel> model;
  std::vector<std::string> inputs{tasks_path};
  if (gen_mode == "model") {
    require_file(vae_path, "MissingCheckpoint");
    require_file(flow_path, "MissingCheckpoint");
    vae = std::make_unique<Vae>(load_vae(vae_path));
    model = std::make_unique<FlowModel>(load_flow(flow_path));
    inputs.push_back(vae_path);
    inputs.push_back(flow_path);
  } else if (gen_mode != "replay") {
    throw Error("UnknownMode", "generation mode '" + gen_mode + "'");
  }

  std::mutex oracle_mu; // external command oracles run serialized
  json report_tasks = json::array();
  std::ofstream csv(out_prefix + ".csv");
  if (!csv) throw Error("FileNotFound", "cannot write " + out_prefix + ".csv");
  csv << "task,sample,length,seq_recovered,ca_rmsd,ca_ok,scope_rmsd,scope_ok,sc_rmsd,"
         "codesignable,success\n";

  const json& task_list = jtasks.is_array() ? jtasks : jtasks.at("tasks");
  for (const auto& jt : task_list) {
    const std::string name = jt.at("name").get<std::string>();
    const char* contig_key = detail == MotifDetail::all_atom ? "contig_all_atom" : "contig_tip_atom";
    if (!jt.contains(contig_key))
      throw Error("MissingReference", name + " lacks " + contig_key);
    const ContigSpec spec = parse_contig(jt.at(contig_key).get<std::string>());
    if (!jt.contains("reference_pdb"))
      throw Error("MissingReference", name + " lists no reference_pdb");
    fs::path ref = jt.at("reference_pdb").get<std::string>();
    if (!ref.is_absolute()) ref = base / ref;
    std::ifstream rf(ref);
    if (!rf) throw Error("MissingReference", ref.string());
    std::stringstream ss;
    ss << rf.rdbuf();
    const std::vector<ParsedChain> chains = parse_pdb_all_chains(ss.str());

    const MotifTask task =
        make_motif_task(name, spec, jt.at("min_length").get<int>(),
                        jt.at("max_length").get<int>(), detail, indexing, chains);

    struct Row {
      int length = 0;
      ScaffoldReport rep;
      ProteinStructure generated;
    };
    std::vector<Row> rows(samples);
    Rng master(seed);
    parallel_for(samples, workers, [&](int i) {
      Rng rng = master.fork("motif-" + name + "-" + std::to_string(i));
      const Placement placement =
          sample_placement(task.spec, task.min_length, task.max_length, rng);
      ProteinStructure generated;
      if (gen_mode == "replay") {
        generated = replay_generated(task, placement);
      } else {
        SamplerConfig cfg = scfg;
        generated = generate(*model, *vae, placement.total_length, cfg, rng);
      }
      ProteinStructure refolded;
      if (oracle_spec == "identity") {
        refolded = generated;
      } else {
        std::lock_guard<std::mutex> lock(oracle_mu);
        refolded = make_oracle(oracle_spec, generated)->fold(generated.sequence_one_letter());
      }
      const std::vector<int>* pos =
          indexing == MotifIndexing::indexed ? &placement.positions : nullptr;
      rows[i] = Row{placement.total_length,
                    evaluate_scaffold(task, generated, refolded, pos), generated};
    });

    int successes = 0;
    std::vector<int> success_idx;
    json jrows = json::array();
    for (int i = 0; i < samples; ++i) {
      const ScaffoldReport& r = rows[i].rep;
      if (r.success()) {
        ++successes;
        success_idx.push_back(i);
      }
      jrows.push_back({{"sample", i},
                       {"length", rows[i].length},
                       {"seq_recovered", r.seq_recovered},
                       {"ca_rmsd", r.ca_rmsd},
                       {"ca_ok", r.ca_ok},
                       {"scope_rmsd", r.scope_rmsd},
                       {"scope_ok", r.scope_ok},
                       {"sc_rmsd", r.sc_rmsd},
                       {"codesignable", r.codesignable},
                       {"success", r.success()}});
      csv << name << "," << i << "," << rows[i].length << "," << r.seq_recovered << ","
          << r.ca_rmsd << "," << r.ca_ok << "," << r.scope_rmsd << "," << r.scope_ok << ","
          << r.sc_rmsd << "," << r.codesignable << "," << r.success() << "\n";
    }

    // Unique successes: single-linkage clusters under CA-RMSD similarity
    // exp(-rmsd) >= exp(-2), i.e. within 2 A; different lengths never merge.
    const int unique = cluster_count(
        int(success_idx.size()),
        [&](int a, int b) {
          const ProteinStructure& pa = rows[success_idx[a]].generated;
          const ProteinStructure& pb = rows[success_idx[b]].generated;
          if (pa.length() != pb.length()) return 0.0;
          std::vector<Vec3> ca_a(pa.length()), ca_b(pb.length());
          for (int i = 0; i < pa.length(); ++i) {
            ca_a[i] = pa.atom(i, slot_CA);
            ca_b[i] = pb.atom(i, slot_CA);
          }
          return std::exp(-kabsch_rmsd(ca_a, ca_b, true));
        },
        std::exp(-2.0));

    report_tasks.push_back({{"name", name},
                            {"contig", render_contig(spec)},
                            {"min_length", task.min_length},
                            {"max_length", task.max_length},
                            {"motif_residues", task.motif_size()},
                            {"motif_segments", motif_segment_count(spec)},
                            {"samples", samples},
                            {"successes", successes},
                            {"unique_successes", unique},
                            {"rows", jrows}});
    std::printf("%-12s %d/%d success (%d unique)\n", name.c_str(), successes, samples, unique);
  }
  csv.close();

  json config{{"tasks", tasks_path},      {"samples", samples},
              {"detail", to_string(detail)}, {"indexing", to_string(indexing)},
              {"mode", gen_mode},         {"oracle", oracle_spec}};
  const json report{{"detail", to_string(detail)},
                    {"indexing", to_string(indexing)},
                    {"mode", gen_mode},
                    {"tasks", report_tasks}};
  std::ofstream js(out_prefix + ".json");
  js << report.dump(2) << "\n";
  js.close();
  emit_manifest("motif", config, seed, inputs, {out_prefix + ".json", out_prefix + ".csv"},
                watch.seconds(),
                fresh_manifest_path(fs::path(out_prefix).parent_path(),
                                    fs::path(out_prefix).filename().string()));
  return 0;
}

int cmd_metrics(const std::string& samples_dir, const std::string& out_prefix,
                const std::string& oracle_spec, const std::string& reference_dir,
                double threshold, int chi_bins) {
  Stopwatch watch;
  const auto files = sorted_pdb_files(samples_dir);
  if (files.empty()) throw Error("EmptyDataset", "no PDB files in " + samples_dir);

  std::vector<ProteinStructure> samples;
  for (const auto& f : files) samples.push_back(parse_pdb_file(f));

  std::ofstream csv(out_prefix + ".csv");
  if (!csv) throw Error("FileNotFound", "cannot write " + out_prefix + ".csv");
  csv << "file,length,clash_score,scrmsd,codesignable\n";

  double clash_sum = 0;
  int codesignable = 0;
  json jrows = json::array();
  for (size_t i = 0; i < samples.size(); ++i) {
    const double clash = clash_score(samples[i]);
    clash_sum += clash;
    auto oracle = make_oracle(oracle_spec, samples[i]);
    const CodesignReport cd = codesignability(samples[i], *oracle);
    codesignable += cd.codesignable ? 1 : 0;
    csv << fs::path(files[i]).filename().string() << "," << samples[i].length() << "," << clash
        << "," << cd.scrmsd << "," << cd.codesignable << "\n";
    jrows.push_back({{"file", fs::path(files[i]).filename().string()},
                     {"length", samples[i].length()},
                     {"clash_score", clash},
                     {"scrmsd", cd.scrmsd},
                     {"codesignable", cd.codesignable}});
  }
  csv.close();

  // Chi densities of the sample set, for external plotting.
  std::ofstream chi_csv(out_prefix + ".chi.csv");
  chi_csv << "residue,chi,bin_center,density\n";
  for (int t = 0; t < num_residue_types; ++t)
    for (int k = 0; k < chi_definition(ResidueType(t)).n_chi; ++k) {
      try {
        const ChiHistogram h = chi_distribution(samples, ResidueType(t), k, chi_bins);
        for (int b = 0; b < h.n_bins; ++b)
          chi_csv << residue_three(ResidueType(t)) << "," << (k + 1) << "," << h.bin_center(b)
                  << "," << h.mass[b] << "\n";
      } catch (const Error& e) {
        if (e.kind != "EmptySelection") throw;
      }
    }
  chi_csv.close();

  json aggregates{{"n_samples", samples.size()},
                  {"mean_clash_score", clash_sum / double(samples.size())},
                  {"codesignable_fraction", double(codesignable) / double(samples.size())},
                  {"clash_score_note", "clash-score proxy (vdW overlap >= 0.4 A)"}};
  if (!reference_dir.empty()) {
    std::vector<ProteinStructure> ref;
    for (const auto& f : sorted_pdb_files(reference_dir)) ref.push_back(parse_pdb_file(f));
    if (ref.empty()) throw Error("EmptyDataset", "no PDB files in " + reference_dir);
    const RotamerDensity density = build_rotamer_density(ref, chi_bins);
    aggregates["rotamer_outlier_fraction"] =
        rotamer_outlier_fraction(samples, density, threshold);
    aggregates["rotamer_threshold"] = threshold;
  }
  // Provenance: cite the run that produced the samples when its manifest is
  // alongside them.
  for (const auto& e : fs::directory_iterator(samples_dir)) {
    const std::string fn = e.path().filename().string();
    if (fn.size() > 13 && fn.find(".manifest") != std::string::npos) {
      aggregates["producer_manifest"] = fn;
      aggregates["producer_manifest_hash"] = hash_hex(fnv1a64_file(e.path().string()));
      break;
    }
  }
  aggregates["rows"] = jrows;

  std::ofstream js(out_prefix + ".json");
  js << aggregates.dump(2) << "\n";
  js.close();

  json config{{"samples", samples_dir},
              {"oracle", oracle_spec},
              {"reference", reference_dir},
              {"threshold", threshold},
              {"chi_bins", chi_bins}};
  emit_manifest("metrics", config, 0, {}, {out_prefix + ".json", out_prefix + ".csv"},
                watch.seconds(),
                fresh_manifest_path(fs::path(out_prefix).parent_path(),
                                    fs::path(out_prefix).filename().string()));
  std::printf("metrics over %zu samples: mean clash %.2f, codesignable %.0f%%\n", samples.size(),
              clash_sum / double(samples.size()),
              100.0 * codesignable / double(samples.size()));
  return 0;
}

int cmd_contig_parse(const std::string& text) {
  const ContigSpec spec = parse_contig(text);
  json segs = json::array();
  int motif_residues = 0;
  for (const auto& s : spec.segments) {
    if (s.kind == ContigSegment::Kind::motif) {
      segs.push_back({{"kind", "motif"},
                      {"chain", std::string(1, s.chain)},
                      {"start", s.start},
                      {"end", s.end}});
      motif_residues += s.motif_length();
    } else {
      segs.push_back({{"kind", "scaffold"}, {"min", s.min_len}, {"max", s.max_len}});
    }
  }
  const json out{{"segments", segs},
                 {"rendered", render_contig(spec)},
                 {"motif_residues", motif_residues},
                 {"motif_segments", motif_segment_count(spec)}};
  std::printf("%s\n", out.dump(2).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"partially latent flow matching for atomistic protein generation"};
  app.require_subcommand(1);

  // ---- toys
  auto* toys = app.add_subcommand("toys", "generate a toy helix corpus");
  std::string toys_out = "data/toys";
  int toys_count = 100, toys_length = 16;
  uint64_t toys_seed = 0;
  double toys_chi_noise = 0.06, toys_fixed_chi = 0;
  toys->add_option("--out", toys_out, "output directory");
  toys->add_option("--count", toys_count, "number of structures");
  toys->add_option("--length", toys_length, "residues per structure (4..64)");
  toys->add_option("--seed", toys_seed, "master seed");
  toys->add_option("--chi-noise", toys_chi_noise, "rotamer jitter, radians");
  auto* fixed_chi_opt =
      toys->add_option("--fixed-chi", toys_fixed_chi, "pin every chi to this angle (degrees)");

  // ---- ingest
  auto* ingest = app.add_subcommand("ingest", "index a directory of PDB files");
  std::string ingest_dir, ingest_out = "dataset.json";
  int ingest_min_len = 1, ingest_max_len = 100000;
  double ingest_min_b = 0;
  ingest->add_option("dir", ingest_dir, "directory of .pdb files")->required();
  ingest->add_option("--out", ingest_out, "index file to write");
  ingest->add_option("--min-length", ingest_min_len, "minimum residue count");
  ingest->add_option("--max-length", ingest_max_len, "maximum residue count");
  ingest->add_option("--min-b", ingest_min_b, "minimum mean per-residue b-factor");

  // ---- shared training knobs
  auto add_net_flags = [](CLI::App* cmd, NetConfig& ncfg) {
    cmd->add_option("--c-seq", ncfg.c_seq, "sequence channels");
    cmd->add_option("--c-pair", ncfg.c_pair, "pair channels");
    cmd->add_option("--layers", ncfg.n_layers, "transformer blocks");
    cmd->add_option("--heads", ncfg.n_heads, "attention heads");
  };

  // ---- train-vae
  auto* tvae = app.add_subcommand("train-vae", "train the structure autoencoder");
  std::string tvae_data, tvae_out = "vae.ckpt", tvae_curves, tvae_config;
  VaeConfig vcfg;
  VaeTrainConfig vtrain;
  uint64_t tvae_seed = 0;
  bool tvae_resume = false;
  auto* tvae_data_opt = tvae->add_option("--data", tvae_data, "dataset index from ingest");
  tvae->add_option("--out", tvae_out, "checkpoint path");
  tvae->add_option("--curves", tvae_curves, "loss curve CSV (default <out>.curves.csv)");
  tvae->add_option("--config", tvae_config, "JSON config file (flags override)");
  auto* tvae_steps = tvae->add_option("--steps", vtrain.steps, "target total steps");
  auto* tvae_batch = tvae->add_option("--batch", vtrain.batch_size, "structures per step");
  auto* tvae_lr = tvae->add_option("--lr", vtrain.lr, "Adam learning rate");
  auto* tvae_ema = tvae->add_option("--ema", vtrain.ema_decay, "EMA decay (0 = off)");
  tvae->add_option("--log-every", vtrain.log_every, "curve row interval");
  auto* tvae_beta = tvae->add_option("--beta", vcfg.beta, "KL weight");
  tvae->add_flag("--fully-latent", vcfg.fully_latent, "decoder also predicts CA");
  add_net_flags(tvae, vcfg.encoder);
  tvae->add_option("--seed", tvae_seed, "master seed");
  tvae->add_flag("--resume", tvae_resume, "continue from --out if it exists");

  // ---- train-flow
  auto* tflow = app.add_subcommand("train-flow", "train the flow denoiser (frozen VAE)");
  std::string tflow_data, tflow_vae, tflow_out = "flow.ckpt", tflow_curves, tflow_config;
  NetConfig fcfg;
  FlowTrainConfig ftrain;
  uint64_t tflow_seed = 0;
  bool tflow_resume = false;
  auto* tflow_data_opt = tflow->add_option("--data", tflow_data, "dataset index from ingest");
  tflow->add_option("--vae", tflow_vae, "trained VAE checkpoint")->required();
  tflow->add_option("--out", tflow_out, "checkpoint path");
  tflow->add_option("--curves", tflow_curves, "loss curve CSV (default <out>.curves.csv)");
  tflow->add_option("--config", tflow_config, "JSON config file (flags override)");
  auto* tflow_steps = tflow->add_option("--steps", ftrain.steps, "target total steps");
  auto* tflow_batch = tflow->add_option("--batch", ftrain.batch_size, "structures per step");
  auto* tflow_lr = tflow->add_option("--lr", ftrain.lr, "Adam learning rate");
  auto* tflow_ema = tflow->add_option("--ema", ftrain.ema_decay, "EMA decay (0 = off)");
  tflow->add_option("--log-every", ftrain.log_every, "curve row interval");
  tflow->add_option("--time-dim", fcfg.time_embed_dim, "sinusoidal time embedding width");
  add_net_flags(tflow, fcfg);
  tflow->add_option("--seed", tflow_seed, "master seed");
  tflow->add_flag("--resume", tflow_resume, "continue from --out if it exists");

  // ---- sampler flags shared by sample/motif
  SamplerConfig scfg;
  std::string sched_x = "exponential", sched_z = "quadratic", scal_x = "inv_t", scal_z = "tan";
  auto add_sampler_flags = [&](CLI::App* cmd) {
    cmd->add_option("--steps", scfg.n_steps, "integration steps");
    cmd->add_option("--schedule-x", sched_x, "coordinate schedule");
    cmd->add_option("--schedule-z", sched_z, "latent schedule");
    cmd->add_option("--scaling-x", scal_x, "coordinate Langevin scaling");
    cmd->add_option("--scaling-z", scal_z, "latent Langevin scaling");
    cmd->add_option("--eta-x", scfg.eta_x, "coordinate noise scale");
    cmd->add_option("--eta-z", scfg.eta_z, "latent noise scale");
    cmd->add_flag("--no-langevin-x", "disable the coordinate Langevin term");
    cmd->add_flag("--no-langevin-z", "disable the latent Langevin term");
  };

  // ---- sample
  auto* sample = app.add_subcommand("sample", "generate structures from checkpoints");
  std::string s_vae, s_flow, s_out = "samples", s_lengths = "16", s_config;
  int s_count = 8, s_workers = 0;
  sample->add_option("--vae", s_vae, "VAE checkpoint")->required();
  sample->add_option("--flow", s_flow, "flow checkpoint")->required();
  sample->add_option("--out", s_out, "output directory");
  sample->add_option("--lengths", s_lengths, "comma-separated residue counts");
  sample->add_option("--count", s_count, "samples per length");
  sample->add_option("--seed", scfg.seed, "master seed");
  sample->add_option("--workers", s_workers, "worker threads (0 = hardware)");
  sample->add_option("--config", s_config, "JSON config file (flags override)");
  add_sampler_flags(sample);

  // ---- motif
  auto* motif = app.add_subcommand("motif", "run motif-scaffolding tasks");
  std::string m_tasks, m_out = "motif_report", m_mode = "replay", m_oracle = "identity";
  std::string m_vae, m_flow, m_detail = "all_atom", m_indexing = "indexed";
  int m_samples = 8, m_workers = 0;
  uint64_t m_seed = 0;
  motif->add_option("--tasks", m_tasks, "task file (JSON)")->required();
  motif->add_option("--out", m_out, "report prefix (writes .json/.csv)");
  motif->add_option("--samples", m_samples, "samples per task");
  motif->add_option("--seed", m_seed, "master seed");
  motif->add_option("--detail", m_detail, "all_atom | tip_atom");
  motif->add_option("--indexing", m_indexing, "indexed | unindexed");
  motif->add_option("--mode", m_mode, "replay | model");
  motif->add_option("--vae", m_vae, "VAE checkpoint (model mode)");
  motif->add_option("--flow", m_flow, "flow checkpoint (model mode)");
  motif->add_option("--oracle", m_oracle, "identity | command:<cmd>");
  motif->add_option("--workers", m_workers, "worker threads (0 = hardware)");
  add_sampler_flags(motif); // model mode integrates with these settings

  // ---- metrics
  auto* metrics = app.add_subcommand("metrics", "evaluate a directory of samples");
  std::string x_samples, x_out = "metrics_report", x_oracle = "identity", x_reference;
  double x_threshold = 0.003;
  int x_chi_bins = default_chi_bins;
  metrics->add_option("--samples", x_samples, "directory of sample PDBs")->required();
  metrics->add_option("--out", x_out, "report prefix (writes .json/.csv/.chi.csv)");
  metrics->add_option("--oracle", x_oracle, "identity | command:<cmd>");
  metrics->add_option("--reference", x_reference, "reference corpus for rotamer density");
  metrics->add_option("--threshold", x_threshold, "rotamer outlier density threshold");
  metrics->add_option("--chi-bins", x_chi_bins, "chi histogram bins");

  // ---- contig-parse
  auto* cparse = app.add_subcommand("contig-parse", "parse a contig string (debug)");
  std::string contig_text;
  cparse->add_option("contig", contig_text, "contig string")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (toys->parsed())
      return cmd_toys(resolve_path(toys_out), toys_count, toys_length, toys_seed,
                      toys_chi_noise, toys_fixed_chi, fixed_chi_opt->count() > 0);

    if (ingest->parsed())
      return cmd_ingest(resolve_path(ingest_dir), resolve_path(ingest_out), ingest_min_len,
                        ingest_max_len, ingest_min_b);

    if (tvae->parsed()) {
      ConfigLayer layer;
      layer.load(tvae_config);
      layer.apply(tvae_data_opt, "data", tvae_data);
      layer.apply(tvae_steps, "steps", vtrain.steps);
      layer.apply(tvae_batch, "batch", vtrain.batch_size);
      layer.apply(tvae_lr, "lr", vtrain.lr);
      layer.apply(tvae_ema, "ema", vtrain.ema_decay);
      layer.apply(tvae_beta, "beta", vcfg.beta);
      if (tvae_data.empty()) throw Error("MissingDataset", "--data (or config 'data') required");
      vcfg.decoder = vcfg.encoder; // one width knob drives both trunks
      return cmd_train_vae(resolve_path(tvae_data), resolve_path(tvae_out),
                           tvae_curves.empty() ? "" : resolve_path(tvae_curves), vcfg, vtrain,
                           tvae_seed, tvae_resume);
    }

    if (tflow->parsed()) {
      ConfigLayer layer;
      layer.load(tflow_config);
      layer.apply(tflow_data_opt, "data", tflow_data);
      layer.apply(tflow_steps, "steps", ftrain.steps);
      layer.apply(tflow_batch, "batch", ftrain.batch_size);
      layer.apply(tflow_lr, "lr", ftrain.lr);
      layer.apply(tflow_ema, "ema", ftrain.ema_decay);
      if (tflow_data.empty()) throw Error("MissingDataset", "--data (or config 'data') required");
      return cmd_train_flow(resolve_path(tflow_data), resolve_path(tflow_vae),
                            resolve_path(tflow_out),
                            tflow_curves.empty() ? "" : resolve_path(tflow_curves), fcfg, ftrain,
                            tflow_seed, tflow_resume);
    }

    if (sample->parsed() || motif->parsed()) {
      scfg.schedule_x = schedule_from_string(sched_x);
      scfg.schedule_z = schedule_from_string(sched_z);
      scfg.langevin_x = langevin_from_string(scal_x);
      scfg.langevin_z = langevin_from_string(scal_z);
      if (sample->count("--no-langevin-x") || motif->count("--no-langevin-x"))
        scfg.use_langevin_x = false;
      if (sample->count("--no-langevin-z") || motif->count("--no-langevin-z"))
        scfg.use_langevin_z = false;
    }

    if (sample->parsed()) {
      std::vector<int> lengths;
      std::stringstream ss(s_lengths);
      std::string tok;
      while (std::getline(ss, tok, ','))
        if (!tok.empty()) lengths.push_back(std::stoi(tok));
      if (lengths.empty()) throw Error("LengthOutOfRange", "--lengths parsed to nothing");
      return cmd_sample(resolve_path(s_vae), resolve_path(s_flow), resolve_path(s_out), lengths,
                        s_count, scfg, s_workers);
    }

    if (motif->parsed()) {
      scfg.seed = m_seed;
      return cmd_motif(resolve_path(m_tasks), resolve_path(m_out), m_samples, m_seed,
                       detail_from_string(m_detail), indexing_from_string(m_indexing), m_mode,
                       resolve_path(m_vae), resolve_path(m_flow), m_oracle, m_workers, scfg);
    }

    if (metrics->parsed())
      return cmd_metrics(resolve_path(x_samples), resolve_path(x_out), x_oracle,
                         x_reference.empty() ? "" : resolve_path(x_reference), x_threshold,
                         x_chi_bins);

    if (cparse->parsed()) return cmd_contig_parse(contig_text);
  } catch (const Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", e.kind.c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
