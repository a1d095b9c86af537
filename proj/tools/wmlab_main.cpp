// wmlab: embed/detect watermarks, train the removal model, run attacks and
// evaluations, export reports. Every subcommand echoes its fully resolved
// configuration to <out>/run.json; rerunning with --config <run.json>
// reproduces every non-timing output bit for bit.
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "wmlab/attacks.hpp"
#include "wmlab/checkpoint.hpp"
#include "wmlab/eval.hpp"
#include "wmlab/removal.hpp"
#include "wmlab/synth.hpp"
#include "wmlab/watermark.hpp"
#include "wmlab/wav_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace wmlab;

namespace {

// flag/semantic mistakes exit 1; anything thrown during execution exits 2
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------- datasets

struct DatasetSpec {
  std::string kind = "synthetic";  // synthetic | wav_dir
  std::string synth_kind = "noise";
  int n = 16;
  double duration_s = 1.0;
  uint64_t seed = 42;
  std::string path;  // wav_dir only
};

void to_json(json& j, const DatasetSpec& d) {
  j = json{{"kind", d.kind},
           {"synth_kind", d.synth_kind},
           {"n", d.n},
           {"duration_s", d.duration_s},
           {"seed", d.seed},
           {"path", d.path}};
}

void from_json(const json& j, DatasetSpec& d) {
  j.at("kind").get_to(d.kind);
  j.at("synth_kind").get_to(d.synth_kind);
  j.at("n").get_to(d.n);
  j.at("duration_s").get_to(d.duration_s);
  j.at("seed").get_to(d.seed);
  j.at("path").get_to(d.path);
}

std::string dataset_id(const DatasetSpec& d) {
  if (d.kind == "wav_dir") return "wav:" + d.path;
  char buf[128];
  std::snprintf(buf, sizeof buf, "synth:%s:n%d:d%g:s%llu", d.synth_kind.c_str(),
                d.n, d.duration_s,
                static_cast<unsigned long long>(d.seed));
  return buf;
}

std::vector<AudioClip> load_dataset(const DatasetSpec& d) {
  if (d.kind == "synthetic") {
    if (d.n < 1) throw UsageError("dataset: --n must be >= 1");
    return synth::make_dataset(synth::kind_from_string(d.synth_kind), d.n,
                               d.duration_s, d.seed);
  }
  if (d.kind != "wav_dir") {
    throw UsageError("dataset: unknown kind '" + d.kind + "'");
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(d.path)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    throw std::runtime_error("dataset: no .wav files in " + d.path);
  }
  std::vector<AudioClip> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(io::load_wav(f.string()));
  return out;
}

// attaches the synthetic-vs-directory choice to `spec`; wav_dir wins when
// --wav-dir is given, otherwise the synthetic defaults apply
void add_dataset_flags(CLI::App* cmd, DatasetSpec& spec,
                       const std::string& prefix = "") {
  const std::string p = prefix.empty() ? "" : prefix + "-";
  cmd->add_option("--" + p + "wav-dir", spec.path,
                  "directory of 16 kHz mono PCM16 .wav files");
  cmd->add_option("--" + p + "synth-kind", spec.synth_kind,
                  "synthetic kind: noise|tones|speechlike");
  cmd->add_option("--" + p + "synth-n", spec.n, "synthetic clip count");
  cmd->add_option("--" + p + "synth-duration", spec.duration_s,
                  "synthetic clip length in seconds");
  cmd->add_option("--" + p + "data-seed", spec.seed, "synthetic dataset seed");
}

void finalize_dataset(DatasetSpec& spec) {
  spec.kind = spec.path.empty() ? "synthetic" : "wav_dir";
}

// ------------------------------------------------------------------ victims

std::string victim_id_of(const wm::Victim& v) {
  return wm::to_string(v.key.scheme) + ":" + std::to_string(v.key.seed);
}

wm::Victim load_victim_checked(const std::string& path) {
  if (path.empty()) throw UsageError("missing required flag --victim");
  return wm::load_victim(path);
}

// -------------------------------------------------------------- run.json IO

void write_text(const fs::path& path, const std::string& body) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  os << body;
  if (!os) throw std::runtime_error("short write to " + path.string());
}

void write_run_json(const fs::path& out_dir, const std::string& command,
                    const json& cfg) {
  json j = cfg;
  j["command"] = command;
  write_text(out_dir / "run.json", j.dump(2) + "\n");
}

// --config replays a previous run: the stored command must match, and all
// other semantic flags are ignored in its favour
template <typename Cfg>
bool maybe_load_config(const std::string& config_path,
                       const std::string& command, Cfg& cfg) {
  if (config_path.empty()) return false;
  std::ifstream in(config_path);
  if (!in) throw UsageError("cannot open --config " + config_path);
  json j = json::parse(in, nullptr, /*allow_exceptions=*/true);
  if (j.value("command", "") != command) {
    throw UsageError("--config was written by '" +
                     j.value("command", std::string("?")) + "', not '" +
                     command + "'");
  }
  cfg = j.get<Cfg>();
  return true;
}

fs::path prepare_out(const std::string& out_dir) {
  fs::path p(out_dir.empty() ? "out" : out_dir);
  fs::create_directories(p);
  return p;
}

// ------------------------------------------------------------------- embed

struct EmbedCfg {
  std::string victim, in;
  uint64_t item_seed = 42;
};
void to_json(json& j, const EmbedCfg& c) {
  j = json{{"victim", c.victim}, {"in", c.in}, {"item_seed", c.item_seed}};
}
void from_json(const json& j, EmbedCfg& c) {
  j.at("victim").get_to(c.victim);
  j.at("in").get_to(c.in);
  j.at("item_seed").get_to(c.item_seed);
}

int run_embed(const EmbedCfg& c, const fs::path& out) {
  const auto victim = load_victim_checked(c.victim);
  if (c.in.empty()) throw UsageError("missing required flag --in");
  const auto clip = io::load_wav(c.in);
  const auto marked = wm::victim_embed(victim, clip, c.item_seed);
  const auto path = out / "embedded.wav";
  io::save_wav(path.string(), marked);
  write_run_json(out, "embed", json(c));
  std::printf("wrote %s\n", path.string().c_str());
  return 0;
}

// ------------------------------------------------------------------ detect

struct DetectCfg {
  std::string victim, in;
};
void to_json(json& j, const DetectCfg& c) {
  j = json{{"victim", c.victim}, {"in", c.in}};
}
void from_json(const json& j, DetectCfg& c) {
  j.at("victim").get_to(c.victim);
  j.at("in").get_to(c.in);
}

int run_detect(const DetectCfg& c, const fs::path& out) {
  const auto victim = load_victim_checked(c.victim);
  if (c.in.empty()) throw UsageError("missing required flag --in");
  const auto clip = io::load_wav(c.in);
  const auto r = wm::victim_detect(victim, clip);
  write_run_json(out, "detect", json(c));
  std::printf("confidence %.6f\n", r.confidence);
  if (victim.key.scheme == wm::Scheme::kMultiBitQim) {
    std::string bits;
    for (auto b : r.decoded_bits) bits += b ? '1' : '0';
    std::printf("bits %s\n", bits.c_str());
  }
  std::printf("decision %s\n", r.confidence >= victim.detector.threshold
                                   ? "watermarked"
                                   : "clean");
  return 0;
}

// ------------------------------------------------------------------ victim

struct VictimCfg {
  std::string scheme = "zero_bit_ssw";
  double strength = 0.1;
  uint64_t key_seed = 41;
  int calib_clips = 100;
  uint64_t calib_seed = 7;
};
void to_json(json& j, const VictimCfg& c) {
  j = json{{"scheme", c.scheme},
           {"strength", c.strength},
           {"key_seed", c.key_seed},
           {"calib_clips", c.calib_clips},
           {"calib_seed", c.calib_seed}};
}
void from_json(const json& j, VictimCfg& c) {
  j.at("scheme").get_to(c.scheme);
  j.at("strength").get_to(c.strength);
  j.at("key_seed").get_to(c.key_seed);
  j.at("calib_clips").get_to(c.calib_clips);
  j.at("calib_seed").get_to(c.calib_seed);
}

int run_victim(const VictimCfg& c, const fs::path& out) {
  wm::Victim v;
  try {
    v.key = {c.key_seed, wm::scheme_from_string(c.scheme)};
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  v.strength = c.strength;
  v.detector = wm::calibrate_detector(v.key.scheme, c.strength, c.calib_clips,
                                      c.key_seed, c.calib_seed);
  const auto path = out / "victim.json";
  wm::save_victim(path.string(), v);
  write_run_json(out, "victim", json(c));
  std::printf("a %.6f\nb %.6f\ntau %.2f\nwrote %s\n", v.detector.a,
              v.detector.b, v.detector.threshold, path.string().c_str());
  return 0;
}

// ------------------------------------------------------------------- train

struct TrainCfg {
  std::string victim;
  DatasetSpec dataset;
  int epochs = 30;
  int batch_size = 16;
  double lr_g = 1e-3, lr_d = 1e-3;
  int crop_len = 4096;
  uint64_t seed = 1;
  double alpha_r = loss::LossWeights{}.alpha_r;
  double alpha_p = loss::LossWeights{}.alpha_p;
  double alpha_wd = loss::LossWeights{}.alpha_wd;
  double alpha_a = loss::LossWeights{}.alpha_a;
  double alpha_d = loss::LossWeights{}.alpha_d;
};
void to_json(json& j, const TrainCfg& c) {
  j = json{{"victim", c.victim},   {"dataset", c.dataset},
           {"epochs", c.epochs},   {"batch_size", c.batch_size},
           {"lr_g", c.lr_g},       {"lr_d", c.lr_d},
           {"crop_len", c.crop_len}, {"seed", c.seed},
           {"alpha_r", c.alpha_r}, {"alpha_p", c.alpha_p},
           {"alpha_wd", c.alpha_wd}, {"alpha_a", c.alpha_a},
           {"alpha_d", c.alpha_d}};
}
void from_json(const json& j, TrainCfg& c) {
  j.at("victim").get_to(c.victim);
  j.at("dataset").get_to(c.dataset);
  j.at("epochs").get_to(c.epochs);
  j.at("batch_size").get_to(c.batch_size);
  j.at("lr_g").get_to(c.lr_g);
  j.at("lr_d").get_to(c.lr_d);
  j.at("crop_len").get_to(c.crop_len);
  j.at("seed").get_to(c.seed);
  j.at("alpha_r").get_to(c.alpha_r);
  j.at("alpha_p").get_to(c.alpha_p);
  j.at("alpha_wd").get_to(c.alpha_wd);
  j.at("alpha_a").get_to(c.alpha_a);
  j.at("alpha_d").get_to(c.alpha_d);
}

attack::TrainConfig to_train_config(const TrainCfg& c, const wm::Victim& v) {
  attack::TrainConfig cfg;
  cfg.epochs = c.epochs;
  cfg.batch_size = c.batch_size;
  cfg.lr_g = c.lr_g;
  cfg.lr_d = c.lr_d;
  cfg.seed = c.seed;
  cfg.crop_len = c.crop_len;
  cfg.weights = {c.alpha_r, c.alpha_p, c.alpha_wd, c.alpha_a, c.alpha_d};
  cfg.victim_id = victim_id_of(v);
  cfg.dataset_id = dataset_id(c.dataset);
  return cfg;
}

void save_models(const fs::path& out, removal::GeneratorModel<float>& gen,
                 removal::DiscriminatorModel<float>& disc, uint64_t seed,
                 const std::string& digest) {
  io::CheckpointMeta meta;
  meta.seed = seed;
  meta.train_config_digest = digest;
  meta.model = "generator";
  io::save_checkpoint((out / "gen.ckpt").string(), meta,
                      removal::to_named_tensors(gen));
  meta.model = "discriminator";
  io::save_checkpoint((out / "disc.ckpt").string(), meta,
                      removal::to_named_tensors(disc));
}

int run_train(const TrainCfg& c, const fs::path& out) {
  const auto victim = load_victim_checked(c.victim);
  const auto clean = load_dataset(c.dataset);
  const auto pairs = eval::embed_pairs(clean, victim, c.seed);
  const auto cfg = to_train_config(c, victim);

  removal::GeneratorModel<float> gen;
  removal::DiscriminatorModel<float> disc;
  removal::init_models(c.seed, gen, disc);

  std::ofstream csv(out / "train_log.csv");
  if (!csv) throw std::runtime_error("cannot open train_log.csv");
  const auto log = attack::train(gen, disc, pairs, victim, cfg, &csv);
  csv.close();

  save_models(out, gen, disc, c.seed, cfg.digest());
  write_run_json(out, "train", json(c));
  const auto& last = log.back();
  std::printf("steps %d\n", last.step);
  std::printf("final L_total %.6g L_disc %.6g\n", last.total, last.disc);
  std::printf("digest %s\n", cfg.digest().c_str());
  std::printf("wrote %s\n", (out / "gen.ckpt").string().c_str());
  return 0;
}

// ------------------------------------------------------------- checkpoints

void load_generator(const std::string& path,
                    removal::GeneratorModel<float>& gen) {
  const auto ckpt = io::load_checkpoint(path);
  if (ckpt.meta.model != "generator") {
    throw std::runtime_error("checkpoint " + path + " holds a '" +
                             ckpt.meta.model + "', not a generator");
  }
  // allocate tensor storage and gate structure, then overwrite every weight
  removal::DiscriminatorModel<float> scratch;
  removal::init_models(0, gen, scratch);
  removal::load_from_tensors(gen, ckpt.tensors);
}

// ------------------------------------------------------------------ attack

struct AttackCfg {
  std::string method;  // harmonic | square | codec
  std::string victim, in, ckpt;
  uint64_t item_seed = 42;
  // square
  int budget = attack::SquareAttackConfig{}.max_queries;
  double eps = attack::SquareAttackConfig{}.eps;
  double init_frac = attack::SquareAttackConfig{}.init_frac;
  uint64_t attack_seed = 0;
  // codec
  std::string codec = "lowpass";
  double cutoff_hz = 3400.0;
  int bits = 8;
};
void to_json(json& j, const AttackCfg& c) {
  j = json{{"method", c.method},       {"victim", c.victim},
           {"in", c.in},               {"ckpt", c.ckpt},
           {"item_seed", c.item_seed}, {"budget", c.budget},
           {"eps", c.eps},             {"init_frac", c.init_frac},
           {"attack_seed", c.attack_seed}, {"codec", c.codec},
           {"cutoff_hz", c.cutoff_hz}, {"bits", c.bits}};
}
void from_json(const json& j, AttackCfg& c) {
  j.at("method").get_to(c.method);
  j.at("victim").get_to(c.victim);
  j.at("in").get_to(c.in);
  j.at("ckpt").get_to(c.ckpt);
  j.at("item_seed").get_to(c.item_seed);
  j.at("budget").get_to(c.budget);
  j.at("eps").get_to(c.eps);
  j.at("init_frac").get_to(c.init_frac);
  j.at("attack_seed").get_to(c.attack_seed);
  j.at("codec").get_to(c.codec);
  j.at("cutoff_hz").get_to(c.cutoff_hz);
  j.at("bits").get_to(c.bits);
}

attack::CodecConfig to_codec_config(const AttackCfg& c) {
  attack::CodecConfig cc;
  if (c.codec == "lowpass") {
    cc.kind = attack::CodecKind::kLowpass;
  } else if (c.codec == "quantize") {
    cc.kind = attack::CodecKind::kQuantize;
  } else {
    throw UsageError("--codec must be lowpass or quantize");
  }
  cc.cutoff_hz = c.cutoff_hz;
  cc.bits = c.bits;
  return cc;
}

int run_attack(const AttackCfg& c, const fs::path& out) {
  if (c.method.empty()) throw UsageError("missing required flag --method");
  if (c.method != "harmonic" && c.method != "square" && c.method != "codec") {
    throw UsageError("--method must be harmonic, square, or codec");
  }
  if (c.method == "harmonic" && c.ckpt.empty()) {
    throw UsageError("missing required flag --ckpt");
  }
  if (c.victim.empty()) throw UsageError("missing required flag --victim");
  if (c.in.empty()) throw UsageError("missing required flag --in");
  const auto victim = load_victim_checked(c.victim);
  const auto clip = io::load_wav(c.in);
  const auto path = out / "attacked.wav";

  if (c.method == "harmonic") {
    removal::GeneratorModel<float> gen;
    load_generator(c.ckpt, gen);
    wm::VictimSession session(victim, c.item_seed);
    const auto r = attack::remove(gen, session, clip);
    io::save_wav(path.string(), r.x_out);
    write_run_json(out, "attack", json(c));
    std::printf("conf_before %.6f\nconf_after %.6f\nsuccess %d\nqueries %d\n",
                r.conf_before, r.conf_after, r.success ? 1 : 0, r.queries);
  } else if (c.method == "square") {
    attack::SquareAttackConfig cfg;
    cfg.max_queries = c.budget;
    cfg.eps = c.eps;
    cfg.init_frac = c.init_frac;
    cfg.seed = c.attack_seed;
    wm::VictimSession session(victim, c.item_seed);
    const auto r = attack::square_attack(session, clip, cfg);
    io::save_wav(path.string(), r.x_adv);
    std::string trace = "query,best_agreement\n";
    char buf[64];
    for (size_t i = 0; i < r.trace.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%zu,%.9g\n", i + 1, r.trace[i]);
      trace += buf;
    }
    write_text(out / "trace.csv", trace);
    write_run_json(out, "attack", json(c));
    std::printf("success %d\nqueries %d\n", r.success ? 1 : 0, r.queries);
  } else if (c.method == "codec") {
    const auto y = attack::codec_attack(clip, to_codec_config(c));
    io::save_wav(path.string(), y);
    const auto r = wm::victim_detect(victim, y);
    write_run_json(out, "attack", json(c));
    std::printf("conf_after %.6f\n", r.confidence);
  }
  std::printf("wrote %s\n", path.string().c_str());
  return 0;
}

// -------------------------------------------------------------------- eval

struct EvalCfg {
  std::string victim;
  DatasetSpec dataset;
  std::string attack = "identity";  // identity | harmonic | square | codec
  std::string ckpt;
  uint64_t seed = 42;
  int budget = attack::SquareAttackConfig{}.max_queries;
  double eps = attack::SquareAttackConfig{}.eps;
  double init_frac = attack::SquareAttackConfig{}.init_frac;
  std::string codec = "lowpass";
  double cutoff_hz = 3400.0;
  int bits = 8;
};
void to_json(json& j, const EvalCfg& c) {
  j = json{{"victim", c.victim}, {"dataset", c.dataset},
           {"attack", c.attack}, {"ckpt", c.ckpt},
           {"seed", c.seed},     {"budget", c.budget},
           {"eps", c.eps},       {"init_frac", c.init_frac},
           {"codec", c.codec},   {"cutoff_hz", c.cutoff_hz},
           {"bits", c.bits}};
}
void from_json(const json& j, EvalCfg& c) {
  j.at("victim").get_to(c.victim);
  j.at("dataset").get_to(c.dataset);
  j.at("attack").get_to(c.attack);
  j.at("ckpt").get_to(c.ckpt);
  j.at("seed").get_to(c.seed);
  j.at("budget").get_to(c.budget);
  j.at("eps").get_to(c.eps);
  j.at("init_frac").get_to(c.init_frac);
  j.at("codec").get_to(c.codec);
  j.at("cutoff_hz").get_to(c.cutoff_hz);
  j.at("bits").get_to(c.bits);
}

int run_eval_cmd(const EvalCfg& c, const fs::path& out) {
  const auto victim = load_victim_checked(c.victim);
  const auto clean = load_dataset(c.dataset);

  removal::GeneratorModel<float> gen;  // kept alive across the closure
  eval::AttackFn fn;
  std::string attack_id = c.attack;
  if (c.attack == "identity") {
    fn = eval::identity_attack_fn();
  } else if (c.attack == "harmonic") {
    if (c.ckpt.empty()) throw UsageError("missing required flag --ckpt");
    load_generator(c.ckpt, gen);
    fn = eval::harmonic_attack_fn(gen);
  } else if (c.attack == "square") {
    attack::SquareAttackConfig cfg;
    cfg.max_queries = c.budget;
    cfg.eps = c.eps;
    cfg.init_frac = c.init_frac;
    fn = eval::square_attack_fn(cfg);
    attack_id += ":q" + std::to_string(c.budget);
  } else if (c.attack == "codec") {
    AttackCfg tmp;
    tmp.codec = c.codec;
    tmp.cutoff_hz = c.cutoff_hz;
    tmp.bits = c.bits;
    fn = eval::codec_attack_fn(to_codec_config(tmp));
    attack_id += ":" + c.codec;
  } else {
    throw UsageError("--attack must be identity, harmonic, square, or codec");
  }

  const auto rep = eval::run_eval(clean, victim, fn, attack_id,
                                  victim_id_of(victim), dataset_id(c.dataset),
                                  c.seed, true);

  std::ofstream csv(out / "eval.csv");
  if (!csv) throw std::runtime_error("cannot open eval.csv");
  eval::write_csv(csv, rep);
  csv.close();

  json rj{{"attack_id", rep.attack_id},
          {"victim_id", rep.victim_id},
          {"dataset_id", rep.dataset_id},
          {"n_samples", rep.n_samples},
          {"asr", rep.asr},
          {"quality_mean", rep.quality_mean},
          {"attack_time_mean_s", rep.attack_time_mean_s}};
  write_text(out / "report.json", rj.dump(2) + "\n");
  write_run_json(out, "eval", json(c));
  std::printf("n %d\nasr %.6f\npq_mean %.6f\nwrote %s\n", rep.n_samples,
              rep.asr, rep.quality_mean, (out / "eval.csv").string().c_str());
  return 0;
}

// ------------------------------------------------------------------ ablate

struct AblateCfg {
  std::string victim;
  DatasetSpec train_set;
  DatasetSpec held_out;
  TrainCfg train;  // victim/dataset fields inside are ignored
  uint64_t eval_seed = 900;
  std::vector<std::string> variants;  // empty = all
};
void to_json(json& j, const AblateCfg& c) {
  j = json{{"victim", c.victim},       {"train_set", c.train_set},
           {"held_out", c.held_out},   {"train", c.train},
           {"eval_seed", c.eval_seed}, {"variants", c.variants}};
}
void from_json(const json& j, AblateCfg& c) {
  j.at("victim").get_to(c.victim);
  j.at("train_set").get_to(c.train_set);
  j.at("held_out").get_to(c.held_out);
  j.at("train").get_to(c.train);
  j.at("eval_seed").get_to(c.eval_seed);
  j.at("variants").get_to(c.variants);
}

int run_ablate(const AblateCfg& c, const fs::path& out) {
  const auto victim = load_victim_checked(c.victim);
  const auto train_clean = load_dataset(c.train_set);
  const auto held = load_dataset(c.held_out);

  auto variants = eval::ablation_variants();
  if (!c.variants.empty()) {
    std::vector<eval::AblationVariant> picked;
    for (const auto& name : c.variants) {
      bool found = false;
      for (const auto& v : variants) {
        if (v.name == name) {
          picked.push_back(v);
          found = true;
          break;
        }
      }
      if (!found) throw UsageError("unknown ablation variant '" + name + "'");
    }
    variants = std::move(picked);
  }

  auto cfg = to_train_config(c.train, victim);
  cfg.dataset_id = dataset_id(c.train_set);
  const auto rows =
      eval::run_ablation(variants, train_clean, held, victim, cfg, c.eval_seed);

  std::ofstream csv(out / "ablation.csv");
  if (!csv) throw std::runtime_error("cannot open ablation.csv");
  eval::write_ablation_csv(csv, rows);
  csv.close();
  write_run_json(out, "ablate", json(c));
  for (const auto& r : rows) {
    std::printf("%s asr %.6f pq %.6f\n", r.variant.c_str(), r.report.asr,
                r.report.quality_mean);
  }
  std::printf("wrote %s\n", (out / "ablation.csv").string().c_str());
  return 0;
}

// -------------------------------------------------------------------- grid

struct GridCfg {
  std::string victim;
  DatasetSpec train_set;
  DatasetSpec held_out;
  TrainCfg train;
  uint64_t eval_seed = 901;
  std::vector<double> alpha_r_grid{0.1, 0.5};
  std::vector<double> alpha_p_grid{0.001, 0.01};
  std::vector<double> alpha_a_grid{0.1, 0.5};
};
void to_json(json& j, const GridCfg& c) {
  j = json{{"victim", c.victim},
           {"train_set", c.train_set},
           {"held_out", c.held_out},
           {"train", c.train},
           {"eval_seed", c.eval_seed},
           {"alpha_r_grid", c.alpha_r_grid},
           {"alpha_p_grid", c.alpha_p_grid},
           {"alpha_a_grid", c.alpha_a_grid}};
}
void from_json(const json& j, GridCfg& c) {
  j.at("victim").get_to(c.victim);
  j.at("train_set").get_to(c.train_set);
  j.at("held_out").get_to(c.held_out);
  j.at("train").get_to(c.train);
  j.at("eval_seed").get_to(c.eval_seed);
  j.at("alpha_r_grid").get_to(c.alpha_r_grid);
  j.at("alpha_p_grid").get_to(c.alpha_p_grid);
  j.at("alpha_a_grid").get_to(c.alpha_a_grid);
}

int run_grid(const GridCfg& c, const fs::path& out) {
  const auto victim = load_victim_checked(c.victim);
  const auto train_clean = load_dataset(c.train_set);
  const auto held = load_dataset(c.held_out);
  auto cfg = to_train_config(c.train, victim);
  cfg.dataset_id = dataset_id(c.train_set);

  const auto grid =
      eval::grid_search(c.alpha_r_grid, c.alpha_p_grid, c.alpha_a_grid,
                        train_clean, held, victim, cfg, c.eval_seed);

  std::ofstream csv(out / "grid.csv");
  if (!csv) throw std::runtime_error("cannot open grid.csv");
  eval::write_grid_csv(csv, grid);
  csv.close();
  write_run_json(out, "grid", json(c));
  std::printf("cells %zu\nwrote %s\n", grid.asr_cube.size(),
              (out / "grid.csv").string().c_str());
  return 0;
}

// ---------------------------------------------------------------- specdiff

struct SpecdiffCfg {
  std::string a, b;
  double quantile = 0.97;
  int max_boxes = 256;
};
void to_json(json& j, const SpecdiffCfg& c) {
  j = json{{"a", c.a},
           {"b", c.b},
           {"quantile", c.quantile},
           {"max_boxes", c.max_boxes}};
}
void from_json(const json& j, SpecdiffCfg& c) {
  j.at("a").get_to(c.a);
  j.at("b").get_to(c.b);
  j.at("quantile").get_to(c.quantile);
  j.at("max_boxes").get_to(c.max_boxes);
}

int run_specdiff(const SpecdiffCfg& c, const fs::path& out) {
  if (c.a.empty()) throw UsageError("missing required flag --a");
  if (c.b.empty()) throw UsageError("missing required flag --b");
  const auto clip_a = io::load_wav(c.a);
  const auto clip_b = io::load_wav(c.b);
  const auto map =
      eval::spectrogram_diff(clip_a, clip_b, c.quantile, c.max_boxes);
  eval::write_pgm((out / "diff.pgm").string(), map);
  eval::write_boxes_json((out / "boxes.json").string(), map);
  write_run_json(out, "specdiff", json(c));
  std::printf("frames %d\nbins %d\nboxes %zu\nwrote %s\n", map.frames,
              map.bins, map.boxes.size(),
              (out / "diff.pgm").string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"watermark removal lab: victims, attacks, and reports"};
  app.require_subcommand(1);

  std::string out_dir = "out";
  app.add_option("--out", out_dir, "output directory (created if missing)")
      ->capture_default_str();

  std::string config_path;
  app.add_option("--config", config_path,
                 "replay a previous run.json; other semantic flags ignored");

  EmbedCfg embed_cfg;
  auto* embed = app.add_subcommand("embed", "watermark a clip");
  embed->add_option("--victim", embed_cfg.victim, "victim.json path");
  embed->add_option("--in", embed_cfg.in, "input .wav");
  embed->add_option("--item-seed", embed_cfg.item_seed,
                    "per-clip seed (keys the multi-bit message)");

  DetectCfg detect_cfg;
  auto* detect = app.add_subcommand("detect", "run the victim detector");
  detect->add_option("--victim", detect_cfg.victim, "victim.json path");
  detect->add_option("--in", detect_cfg.in, "input .wav");

  VictimCfg victim_cfg;
  auto* victim =
      app.add_subcommand("victim", "calibrate a victim and save victim.json");
  victim->add_option("--scheme", victim_cfg.scheme,
                     "zero_bit_ssw|multi_bit_qim");
  victim->add_option("--strength", victim_cfg.strength,
                     "embedding strength (ssw beta / qim delta)");
  victim->add_option("--key-seed", victim_cfg.key_seed, "watermark key seed");
  victim->add_option("--calib-clips", victim_cfg.calib_clips,
                     "calibration clip count");
  victim->add_option("--calib-seed", victim_cfg.calib_seed,
                     "calibration data seed");

  TrainCfg train_cfg;
  auto* train = app.add_subcommand("train", "co-train generator and critic");
  train->add_option("--victim", train_cfg.victim, "victim.json path");
  add_dataset_flags(train, train_cfg.dataset);
  train->add_option("--epochs", train_cfg.epochs, "training epochs");
  train->add_option("--batch-size", train_cfg.batch_size, "batch size");
  train->add_option("--lr-g", train_cfg.lr_g, "generator learning rate");
  train->add_option("--lr-d", train_cfg.lr_d, "discriminator learning rate");
  train->add_option("--crop-len", train_cfg.crop_len,
                    "random crop length per batch item");
  train->add_option("--seed", train_cfg.seed, "training seed");
  train->add_option("--alpha-r", train_cfg.alpha_r, "reconstruction weight");
  train->add_option("--alpha-p", train_cfg.alpha_p, "psychoacoustic weight");
  train->add_option("--alpha-wd", train_cfg.alpha_wd, "decorrelation weight");
  train->add_option("--alpha-a", train_cfg.alpha_a, "adversarial weight");
  train->add_option("--alpha-d", train_cfg.alpha_d,
                    "detector-guided weight (zero-bit victims only)");

  AttackCfg attack_cfg;
  auto* attack_cmd = app.add_subcommand("attack", "attack a single clip");
  attack_cmd->add_option("--method", attack_cfg.method,
                         "harmonic|square|codec");
  attack_cmd->add_option("--victim", attack_cfg.victim, "victim.json path");
  attack_cmd->add_option("--in", attack_cfg.in, "watermarked input .wav");
  attack_cmd->add_option("--ckpt", attack_cfg.ckpt,
                         "generator checkpoint (harmonic)");
  attack_cmd->add_option("--item-seed", attack_cfg.item_seed,
                         "per-clip seed used at embed time");
  attack_cmd->add_option("--budget", attack_cfg.budget,
                         "square: max detector queries");
  attack_cmd->add_option("--eps", attack_cfg.eps,
                         "square: max per-sample amplitude");
  attack_cmd->add_option("--init-frac", attack_cfg.init_frac,
                         "square: initial window fraction");
  attack_cmd->add_option("--attack-seed", attack_cfg.attack_seed,
                         "square: proposal RNG seed");
  attack_cmd->add_option("--codec", attack_cfg.codec,
                         "codec: lowpass|quantize");
  attack_cmd->add_option("--cutoff-hz", attack_cfg.cutoff_hz,
                         "codec: lowpass cutoff");
  attack_cmd->add_option("--bits", attack_cfg.bits, "codec: quantizer depth");

  EvalCfg eval_cfg;
  auto* eval_cmd =
      app.add_subcommand("eval", "embed-attack-detect over a dataset");
  eval_cmd->add_option("--victim", eval_cfg.victim, "victim.json path");
  add_dataset_flags(eval_cmd, eval_cfg.dataset);
  eval_cmd->add_option("--attack", eval_cfg.attack,
                       "identity|harmonic|square|codec");
  eval_cmd->add_option("--ckpt", eval_cfg.ckpt,
                       "generator checkpoint (harmonic)");
  eval_cmd->add_option("--seed", eval_cfg.seed, "evaluation seed");
  eval_cmd->add_option("--budget", eval_cfg.budget,
                       "square: max detector queries");
  eval_cmd->add_option("--eps", eval_cfg.eps,
                       "square: max per-sample amplitude");
  eval_cmd->add_option("--init-frac", eval_cfg.init_frac,
                       "square: initial window fraction");
  eval_cmd->add_option("--codec", eval_cfg.codec, "codec: lowpass|quantize");
  eval_cmd->add_option("--cutoff-hz", eval_cfg.cutoff_hz,
                       "codec: lowpass cutoff");
  eval_cmd->add_option("--bits", eval_cfg.bits, "codec: quantizer depth");

  AblateCfg ablate_cfg;
  auto* ablate = app.add_subcommand("ablate", "train and score loss variants");
  ablate->add_option("--victim", ablate_cfg.victim, "victim.json path");
  add_dataset_flags(ablate, ablate_cfg.train_set, "train");
  add_dataset_flags(ablate, ablate_cfg.held_out, "held");
  ablate->add_option("--epochs", ablate_cfg.train.epochs, "training epochs");
  ablate->add_option("--batch-size", ablate_cfg.train.batch_size,
                     "batch size");
  ablate->add_option("--lr-g", ablate_cfg.train.lr_g, "generator lr");
  ablate->add_option("--lr-d", ablate_cfg.train.lr_d, "discriminator lr");
  ablate->add_option("--crop-len", ablate_cfg.train.crop_len, "crop length");
  ablate->add_option("--seed", ablate_cfg.train.seed, "training seed");
  ablate->add_option("--eval-seed", ablate_cfg.eval_seed, "evaluation seed");
  ablate->add_option("--variants", ablate_cfg.variants,
                     "subset of variants (default: all)");

  GridCfg grid_cfg;
  auto* grid = app.add_subcommand("grid", "loss-weight grid search");
  grid->add_option("--victim", grid_cfg.victim, "victim.json path");
  add_dataset_flags(grid, grid_cfg.train_set, "train");
  add_dataset_flags(grid, grid_cfg.held_out, "held");
  grid->add_option("--epochs", grid_cfg.train.epochs, "training epochs");
  grid->add_option("--batch-size", grid_cfg.train.batch_size, "batch size");
  grid->add_option("--lr-g", grid_cfg.train.lr_g, "generator lr");
  grid->add_option("--lr-d", grid_cfg.train.lr_d, "discriminator lr");
  grid->add_option("--crop-len", grid_cfg.train.crop_len, "crop length");
  grid->add_option("--seed", grid_cfg.train.seed, "training seed");
  grid->add_option("--eval-seed", grid_cfg.eval_seed, "evaluation seed");
  grid->add_option("--alpha-r-grid", grid_cfg.alpha_r_grid,
                   "reconstruction weight axis");
  grid->add_option("--alpha-p-grid", grid_cfg.alpha_p_grid,
                   "psychoacoustic weight axis");
  grid->add_option("--alpha-a-grid", grid_cfg.alpha_a_grid,
                   "adversarial weight axis");

  SpecdiffCfg specdiff_cfg;
  auto* specdiff =
      app.add_subcommand("specdiff", "export a spectrogram difference map");
  specdiff->add_option("--a", specdiff_cfg.a, "first .wav");
  specdiff->add_option("--b", specdiff_cfg.b, "second .wav");
  specdiff->add_option("--quantile", specdiff_cfg.quantile,
                       "box threshold quantile in (0,1)");
  specdiff->add_option("--max-boxes", specdiff_cfg.max_boxes,
                       "annotation box cap");

  // --out/--config are app-level; let them appear after the subcommand too
  for (auto* sub : {embed, detect, victim, train, attack_cmd, eval_cmd, ablate,
                    grid, specdiff}) {
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 1;
  }

  try {
    const fs::path out = prepare_out(out_dir);
    if (embed->parsed()) {
      maybe_load_config(config_path, "embed", embed_cfg);
      return run_embed(embed_cfg, out);
    }
    if (detect->parsed()) {
      maybe_load_config(config_path, "detect", detect_cfg);
      return run_detect(detect_cfg, out);
    }
    if (victim->parsed()) {
      maybe_load_config(config_path, "victim", victim_cfg);
      return run_victim(victim_cfg, out);
    }
    if (train->parsed()) {
      if (!maybe_load_config(config_path, "train", train_cfg)) {
        finalize_dataset(train_cfg.dataset);
      }
      return run_train(train_cfg, out);
    }
    if (attack_cmd->parsed()) {
      maybe_load_config(config_path, "attack", attack_cfg);
      return run_attack(attack_cfg, out);
    }
    if (eval_cmd->parsed()) {
      if (!maybe_load_config(config_path, "eval", eval_cfg)) {
        finalize_dataset(eval_cfg.dataset);
      }
      return run_eval_cmd(eval_cfg, out);
    }
    if (ablate->parsed()) {
      if (!maybe_load_config(config_path, "ablate", ablate_cfg)) {
        finalize_dataset(ablate_cfg.train_set);
        finalize_dataset(ablate_cfg.held_out);
      }
      return run_ablate(ablate_cfg, out);
    }
    if (grid->parsed()) {
      if (!maybe_load_config(config_path, "grid", grid_cfg)) {
        finalize_dataset(grid_cfg.train_set);
        finalize_dataset(grid_cfg.held_out);
      }
      return run_grid(grid_cfg, out);
    }
    if (specdiff->parsed()) {
      maybe_load_config(config_path, "specdiff", specdiff_cfg);
      return run_specdiff(specdiff_cfg, out);
    }
    std::cerr << "no subcommand selected\n" << app.help() << std::flush;
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
