// reacta: repeat-aware session recommendation pipeline.
//
// Subcommands: gen-data, build, train, evaluate, recommend. Every command
// writes a resolved-config snapshot (with its hash) next to its outputs and
// is deterministic given identical inputs and seed.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "reacta/reacta.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace reacta;

namespace {

void write_snapshot(const std::string& out_dir, const std::string& command, json resolved) {
  resolved["command"] = command;
  resolved["config_hash"] = config_hash(resolved);
  std::ofstream out(fs::path(out_dir) / (command + ".config.json"));
  if (!out) throw std::runtime_error("cannot write config snapshot in " + out_dir);
  out << resolved.dump(2) << '\n';
}

// flat JSON config file; explicitly passed flags override its fields
json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config file not found: " + path);
  json j;
  in >> j;
  if (!j.is_object()) throw std::runtime_error("config file must hold one flat JSON object: " + path);
  return j;
}

template <typename T>
void apply_config(const json& cfg, const CLI::Option* opt, const std::string& key, T& value) {
  if (opt->count() > 0) return;  // explicit flag wins
  if (cfg.contains(key)) value = cfg.at(key).get<T>();
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw std::runtime_error("missing " + what + ": expected at " + path);
}

struct Artifacts {
  Corpus corpus;
  CorpusSplit split;
  EmbeddingMatrix m;
  EmbeddingMatrix audio;
  CorrelationMatrix c;
  double alpha = 0.5;
  json manifest;
};

Artifacts load_artifacts(const std::string& dir) {
  Artifacts a;
  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  require_file(manifest_path, "catalog/split manifest");
  a.manifest = load_manifest_file(manifest_path);
  const json& params = a.manifest.at("params");

  const std::string events = params.at("events").get<std::string>();
  require_file(events, "events file");
  a.corpus = ingest_events(events, params.at("gap").get<std::int64_t>(), params.at("k").get<int>());
  a.split = manifest_to_split(a.manifest, a.corpus);
  a.alpha = params.at("alpha").get<double>();

  const std::string svd_path = (fs::path(dir) / "svd.bin").string();
  require_file(svd_path, "collaborative embedding file");
  a.m = load_embeddings(svd_path, EmbeddingKind::svd, 0, a.corpus.catalog);

  const std::string audio_path = params.at("audio").get<std::string>();
  require_file(audio_path, "audio embedding file");
  a.audio = load_embeddings(audio_path, EmbeddingKind::audio, 0, a.corpus.catalog);

  const std::string corr_path = (fs::path(dir) / "correlation.bin").string();
  require_file(corr_path, "correlation artifact");
  a.c = load_correlation(corr_path);
  return a;
}

ModelConfig model_config_from(const Artifacts& a, int B, int H, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.d = a.m.dim;
  cfg.d_audio = a.audio.dim;
  cfg.L = a.split.L;
  cfg.B = B;
  cfg.H = H;
  cfg.n_users = a.corpus.n_users();
  cfg.init_seed = seed;
  return cfg;
}

struct ModelSpec {
  std::string name;
  std::vector<std::string> checkpoints;
};

ModelSpec parse_model_spec(const std::string& raw) {
  ModelSpec spec;
  const std::size_t eq = raw.find('=');
  spec.name = raw.substr(0, eq);
  if (eq != std::string::npos) {
    std::string rest = raw.substr(eq + 1);
    std::size_t start = 0;
    while (start <= rest.size()) {
      const std::size_t comma = rest.find(',', start);
      const std::string part = rest.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (!part.empty()) spec.checkpoints.push_back(part);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  return spec;
}

Model load_model_checkpoint(const Artifacts& a, const std::string& path) {
  require_file(path, "model checkpoint");
  // peek the hyperparameters to rebuild the right shapes
  std::ifstream in(path, std::ios::binary);
  std::string header_line;
  std::getline(in, header_line);
  const json header = json::parse(header_line);
  const json& hyper = header.at("hyper");
  ModelConfig cfg = model_config_from(a, hyper.at("B").get<int>(), hyper.at("H").get<int>(), 1);
  if (hyper.at("d").get<int>() != cfg.d || hyper.at("L").get<int>() != cfg.L ||
      hyper.at("d_audio").get<int>() != cfg.d_audio)
    throw std::runtime_error("checkpoint " + path + " was trained against different artifacts (d/L/d' mismatch)");
  Model model = Model::init(cfg);
  load_checkpoint(path, model.store);
  return model;
}

BprModel load_bpr_checkpoint(const Artifacts& a, const std::string& path) {
  require_file(path, "bpr checkpoint");
  BprModel bpr;
  bpr.n_users = a.corpus.n_users();
  bpr.n_items = a.corpus.catalog.size();
  std::ifstream in(path, std::ios::binary);
  std::string header_line;
  std::getline(in, header_line);
  const json header = json::parse(header_line);
  bpr.dim = header.at("hyper").at("dim").get<int>();
  ParamStore store;
  store.add("bpr.user", Tensor({bpr.n_users, bpr.dim}));
  store.add("bpr.item", Tensor({bpr.n_items, bpr.dim}));
  load_checkpoint(path, store);
  bpr.user_f = store.at("bpr.user").value.values;
  bpr.item_f = store.at("bpr.item").value.values;
  bpr.trained = true;
  return bpr;
}

InstanceScorer make_scorer(const std::string& name, Artifacts& a, Model* model, BprModel* bpr, int k) {
  if (name == "actr-repeat") {
    return [&a, k](const EvalInstance& inst) {
      const auto& sessions = a.corpus.sequences[static_cast<std::size_t>(inst.user)].sessions;
      ScoringInputs in{{sessions.data() + inst.target - a.split.L, static_cast<std::size_t>(a.split.L)},
                       inst.user,
                       static_cast<double>(sessions[static_cast<std::size_t>(inst.target)].start_time)};
      return top_k_candidates(actr_repeat_scores(a.m, a.c, a.alpha, in), k);
    };
  }
  if (name == "actr-bpr") {
    return [&a, bpr, k](const EvalInstance& inst) {
      const auto& sessions = a.corpus.sequences[static_cast<std::size_t>(inst.user)].sessions;
      ScoringInputs in{{sessions.data() + inst.target - a.split.L, static_cast<std::size_t>(a.split.L)},
                       inst.user,
                       static_cast<double>(sessions[static_cast<std::size_t>(inst.target)].start_time)};
      std::unordered_set<std::int32_t> heard;
      for (const auto& s : in.observed)
        for (std::int32_t v : s.tracks) heard.insert(v);
      return top_k(actr_bpr_scores(*bpr, a.c, a.alpha, in), k, heard);
    };
  }
  const ScoringRule rule = name.rfind("pisa", 0) == 0 ? ScoringRule::pisa : ScoringRule::reacta;
  return [&a, model, rule, k](const EvalInstance& inst) {
    return score_instance(*model, a.corpus, a.split, a.m, a.audio, a.c, a.alpha, rule, inst, k);
  };
}

bool needs_model_checkpoint(const std::string& name) {
  return name == "reacta-u" || name == "reacta-p" || name == "pisa-u" || name == "pisa-p";
}

// ---- subcommands ----

struct GenFlags {
  std::string out_dir;
  SyntheticConfig cfg;
};

int cmd_gen_data(const json& cfg_file, CLI::App* cmd, GenFlags& f) {
  auto get = [&](const char* flag) { return cmd->get_option(flag); };
  apply_config(cfg_file, get("--users"), "users", f.cfg.n_users);
  apply_config(cfg_file, get("--tracks"), "tracks", f.cfg.n_tracks);
  apply_config(cfg_file, get("--sessions"), "sessions", f.cfg.sessions_per_user);
  apply_config(cfg_file, get("--k"), "k", f.cfg.k);
  apply_config(cfg_file, get("--p-repeat"), "p_repeat", f.cfg.p_repeat);
  apply_config(cfg_file, get("--zipf"), "zipf", f.cfg.zipf_s);
  apply_config(cfg_file, get("--genres"), "genres", f.cfg.n_genres);
  apply_config(cfg_file, get("--audio-dim"), "audio_dim", f.cfg.d_audio);
  apply_config(cfg_file, get("--seed"), "seed", f.cfg.seed);

  fs::create_directories(f.out_dir);
  auto data = generate_synthetic(f.cfg);
  const std::string events_path = (fs::path(f.out_dir) / "events.tsv").string();
  const std::string audio_path = (fs::path(f.out_dir) / "audio.bin").string();
  write_events_file(events_path, data.events);
  save_embeddings(audio_path, audio_matrix(data), data.track_ids);

  json resolved = {{"users", f.cfg.n_users},   {"tracks", f.cfg.n_tracks},
                   {"sessions", f.cfg.sessions_per_user},
                   {"k", f.cfg.k},             {"p_repeat", f.cfg.p_repeat},
                   {"zipf", f.cfg.zipf_s},     {"genres", f.cfg.n_genres},
                   {"audio_dim", f.cfg.d_audio}, {"seed", f.cfg.seed}};
  write_snapshot(f.out_dir, "gen-data", resolved);
  std::cout << "wrote " << events_path << " (" << data.events.size() << " events) and " << audio_path << "\n";
  return 0;
}

struct BuildFlags {
  std::string events, audio, out_dir;
  std::int64_t gap = 1800;
  int k = 10;
  int L = 30;
  int n_val = 10;
  int n_test = 10;
  int svd_dim = 128;
  double alpha = 0.5;
  std::uint64_t seed = 1;
};

int cmd_build(const json& cfg_file, CLI::App* cmd, const std::string& preset, BuildFlags& f) {
  auto get = [&](const char* flag) { return cmd->get_option(flag); };
  apply_config(cfg_file, get("--events"), "events", f.events);
  apply_config(cfg_file, get("--audio"), "audio", f.audio);
  apply_config(cfg_file, get("--gap"), "gap", f.gap);
  apply_config(cfg_file, get("--k"), "k", f.k);
  apply_config(cfg_file, get("--l"), "L", f.L);
  apply_config(cfg_file, get("--n-val"), "n_val", f.n_val);
  apply_config(cfg_file, get("--n-test"), "n_test", f.n_test);
  apply_config(cfg_file, get("--svd-dim"), "svd_dim", f.svd_dim);
  apply_config(cfg_file, get("--alpha"), "alpha", f.alpha);
  apply_config(cfg_file, get("--seed"), "seed", f.seed);
  if (preset == "desk") {
    if (get("--l")->count() == 0 && !cfg_file.contains("L")) f.L = 8;
    if (get("--svd-dim")->count() == 0 && !cfg_file.contains("svd_dim")) f.svd_dim = 16;
  }

  require_file(f.events, "events file");
  require_file(f.audio, "audio embedding file");
  fs::create_directories(f.out_dir);

  Corpus corpus = ingest_events(f.events, f.gap, f.k);
  CorpusSplit split = make_split(corpus, f.L, f.n_val, f.n_test, f.seed);
  auto train_sessions = collect_training_sessions(corpus, split);
  EmbeddingMatrix m = build_svd_embeddings(train_sessions, corpus.catalog.size(), f.svd_dim, f.seed);
  CorrelationMatrix c = build_correlation(training_session_pointers(corpus, split), corpus.catalog.size());
  ActivationTable table = build_activation_table(corpus, split, m, c, f.alpha);

  save_embeddings((fs::path(f.out_dir) / "svd.bin").string(), m, corpus.catalog.ids);
  save_correlation((fs::path(f.out_dir) / "correlation.bin").string(), c);
  export_activation_table((fs::path(f.out_dir) / "activation.tsv").string(), corpus, split, table);

  json params = {{"events", f.events}, {"audio", f.audio},     {"gap", f.gap},
                 {"k", f.k},           {"L", f.L},             {"n_val", f.n_val},
                 {"n_test", f.n_test}, {"svd_dim", f.svd_dim}, {"alpha", f.alpha},
                 {"seed", f.seed}};
  save_manifest((fs::path(f.out_dir) / "manifest.json").string(), manifest_json(split, params));
  write_snapshot(f.out_dir, "build", params);
  std::cout << "built artifacts in " << f.out_dir << ": " << corpus.n_users() << " users, "
            << corpus.catalog.size() << " tracks, " << split.train.size() << " training windows, "
            << split.validation.size() << "/" << split.test.size() << " val/test instances (svd d=" << m.dim
            << ")\n";
  return 0;
}

struct TrainFlags {
  std::string artifacts, out_dir;
  std::string model = "reacta-u";
  TrainingConfig tcfg;
  int blocks = 2;
  int heads = 2;
  int bpr_dim = 32;
};

int cmd_train(const json& cfg_file, CLI::App* cmd, TrainFlags& f) {
  auto get = [&](const char* flag) { return cmd->get_option(flag); };
  apply_config(cfg_file, get("--model"), "model", f.model);
  apply_config(cfg_file, get("--lr"), "lr", f.tcfg.lr);
  apply_config(cfg_file, get("--lambda"), "lambda", f.tcfg.lambda);
  apply_config(cfg_file, get("--beta-enc"), "beta_enc", f.tcfg.beta_enc);
  apply_config(cfg_file, get("--gamma"), "gamma", f.tcfg.gamma);
  apply_config(cfg_file, get("--epochs"), "epochs", f.tcfg.epochs);
  apply_config(cfg_file, get("--batch"), "batch", f.tcfg.batch_size);
  apply_config(cfg_file, get("--patience"), "patience", f.tcfg.patience);
  apply_config(cfg_file, get("--k-rec"), "k_rec", f.tcfg.k_rec);
  apply_config(cfg_file, get("--seed"), "seed", f.tcfg.seed);
  apply_config(cfg_file, get("--blocks"), "blocks", f.blocks);
  apply_config(cfg_file, get("--heads"), "heads", f.heads);
  apply_config(cfg_file, get("--bpr-dim"), "bpr_dim", f.bpr_dim);

  fs::create_directories(f.out_dir);
  Artifacts a = load_artifacts(f.artifacts);

  json resolved = {{"artifacts", f.artifacts},  {"model", f.model},
                   {"lr", f.tcfg.lr},           {"lambda", f.tcfg.lambda},
                   {"beta_enc", f.tcfg.beta_enc}, {"gamma", f.tcfg.gamma},
                   {"epochs", f.tcfg.epochs},   {"batch", f.tcfg.batch_size},
                   {"patience", f.tcfg.patience}, {"k_rec", f.tcfg.k_rec},
                   {"seed", f.tcfg.seed},       {"blocks", f.blocks},
                   {"heads", f.heads},          {"bpr_dim", f.bpr_dim}};

  if (f.model == "actr-bpr") {
    BprConfig bcfg;
    bcfg.dim = f.bpr_dim;
    bcfg.epochs = std::min(f.tcfg.epochs, 100);
    bcfg.seed = f.tcfg.seed;
    BprModel bpr = train_bpr(a.corpus, a.split, bcfg);
    const double auc = bpr_pairwise_auc(bpr, a.corpus, a.split, f.tcfg.seed + 1);
    ParamStore store;
    store.add("bpr.user", Tensor({bpr.n_users, bpr.dim}, bpr.user_f));
    store.add("bpr.item", Tensor({bpr.n_items, bpr.dim}, bpr.item_f));
    json extra;
    extra["model"] = "actr-bpr";
    extra["hyper"] = {{"dim", bpr.dim}};
    extra["config_hash"] = config_hash(resolved);
    save_checkpoint((fs::path(f.out_dir) / "checkpoint.bin").string(), store, extra);
    std::ofstream hist(fs::path(f.out_dir) / "history.jsonl");
    hist << json({{"epochs", bcfg.epochs}, {"pairwise_auc", auc}}).dump() << '\n';
    write_snapshot(f.out_dir, "train", resolved);
    std::cout << "trained actr-bpr factors (pairwise AUC " << auc << ")\n";
    return 0;
  }

  if (!needs_model_checkpoint(f.model))
    throw std::runtime_error("unknown trainable model '" + f.model +
                             "' (expected reacta-u, reacta-p, pisa-u, pisa-p or actr-bpr)");
  if (f.model.rfind("pisa", 0) == 0) {
    f.tcfg.beta_enc = 0.0;
    f.tcfg.gamma = 0.0;
    f.tcfg.scoring = ScoringRule::pisa;
  } else {
    f.tcfg.scoring = ScoringRule::reacta;
  }
  f.tcfg.sampler = f.model.back() == 'p' ? SamplerKind::popularity : SamplerKind::uniform;

  Model model = Model::init(model_config_from(a, f.blocks, f.heads, f.tcfg.seed));
  TrainResult result = train_model(model, a.corpus, a.split, a.m, a.audio, a.c, a.alpha, f.tcfg);

  json extra;
  extra["model"] = f.model;
  extra["hyper"] = {{"d", model.cfg.d}, {"d_audio", model.cfg.d_audio}, {"L", model.cfg.L},
                    {"B", model.cfg.B}, {"H", model.cfg.H},             {"n_users", model.cfg.n_users}};
  extra["config_hash"] = config_hash(resolved);
  save_checkpoint((fs::path(f.out_dir) / "checkpoint.bin").string(), model.store, extra);
  {
    std::ofstream hist(fs::path(f.out_dir) / "history.jsonl");
    for (const auto& rec : result.history) {
      json line = {{"epoch", rec.epoch},
                   {"loss", rec.loss},
                   {"loss_pisa", rec.loss_pisa},
                   {"loss_enc", rec.loss_enc},
                   {"loss_actr", rec.loss_actr},
                   {"wall_seconds", rec.wall_seconds}};
      if (rec.val_ndcg >= 0.0) line["val_ndcg"] = rec.val_ndcg;
      hist << line.dump() << '\n';
    }
  }
  write_snapshot(f.out_dir, "train", resolved);
  std::cout << "trained " << f.model << " for " << result.history.size() << " epoch(s)";
  if (result.best_val_ndcg >= 0.0)
    std::cout << ", best val NDCG@" << f.tcfg.k_rec << " = " << result.best_val_ndcg << " at epoch "
              << result.best_epoch;
  std::cout << "\n";
  return 0;
}

struct EvalFlags {
  std::string artifacts, out;
  std::string split = "test";
  int k = 10;
  std::vector<std::string> models;
};

int cmd_evaluate(const json& cfg_file, CLI::App* cmd, EvalFlags& f) {
  auto get = [&](const char* flag) { return cmd->get_option(flag); };
  apply_config(cfg_file, get("--split"), "split", f.split);
  apply_config(cfg_file, get("--k"), "k", f.k);
  if (f.models.empty() && cfg_file.contains("models"))
    f.models = cfg_file.at("models").get<std::vector<std::string>>();
  if (f.models.empty()) throw std::runtime_error("no --model given");

  Artifacts a = load_artifacts(f.artifacts);
  const std::vector<EvalInstance>& instances = f.split == "validation" ? a.split.validation : a.split.test;
  if (instances.empty()) throw std::runtime_error("the " + f.split + " split holds no instances");

  EvalReport report;
  report.k = f.k;
  for (const std::string& raw : f.models) {
    ModelSpec spec = parse_model_spec(raw);
    ModelReport row;
    row.model = spec.name;
    if (spec.name == "actr-repeat") {
      InstanceScorer scorer = make_scorer(spec.name, a, nullptr, nullptr, f.k);
      row.runs.push_back(evaluate(scorer, a.corpus, a.split, instances, f.k));
    } else if (spec.name == "actr-bpr") {
      if (spec.checkpoints.empty())
        throw std::runtime_error("model actr-bpr needs a checkpoint: --model actr-bpr=path");
      for (const auto& ckpt : spec.checkpoints) {
        BprModel bpr = load_bpr_checkpoint(a, ckpt);
        InstanceScorer scorer = make_scorer(spec.name, a, nullptr, &bpr, f.k);
        row.runs.push_back(evaluate(scorer, a.corpus, a.split, instances, f.k));
      }
    } else if (needs_model_checkpoint(spec.name)) {
      if (spec.checkpoints.empty())
        throw std::runtime_error("model " + spec.name + " needs a checkpoint: --model " + spec.name + "=path");
      for (const auto& ckpt : spec.checkpoints) {
        Model model = load_model_checkpoint(a, ckpt);
        InstanceScorer scorer = make_scorer(spec.name, a, &model, nullptr, f.k);
        row.runs.push_back(evaluate(scorer, a.corpus, a.split, instances, f.k));
      }
    } else {
      throw std::runtime_error("unknown model '" + spec.name + "'");
    }
    report.rows.push_back(std::move(row));
  }
  if (!report.rows.empty() && !report.rows.front().runs.empty())
    report.rep_ratio_gt = report.rows.front().runs.front().rep_ratio_gt;

  const json out_json = eval_report_json(report, /*per_instance_arrays=*/true);
  if (!f.out.empty()) {
    const fs::path parent = fs::path(f.out).parent_path();
    const std::string dir = parent.empty() ? "." : parent.string();
    fs::create_directories(dir);
    std::ofstream out(f.out);
    out << out_json.dump(2) << '\n';
    json resolved = {{"artifacts", f.artifacts}, {"split", f.split}, {"k", f.k}, {"models", f.models}};
    write_snapshot(dir, "evaluate", resolved);
  }
  std::cout << eval_report_table(report);
  return 0;
}

struct RecommendFlags {
  std::string artifacts, out, model;
  int k = 10;
  std::vector<std::string> users;
};

int cmd_recommend(const json& cfg_file, CLI::App* cmd, RecommendFlags& f) {
  auto get = [&](const char* flag) { return cmd->get_option(flag); };
  apply_config(cfg_file, get("--k"), "k", f.k);

  Artifacts a = load_artifacts(f.artifacts);
  ModelSpec spec = parse_model_spec(f.model);

  Model model;
  BprModel bpr;
  if (needs_model_checkpoint(spec.name)) {
    if (spec.checkpoints.empty()) throw std::runtime_error("model " + spec.name + " needs a checkpoint");
    model = load_model_checkpoint(a, spec.checkpoints.front());
  } else if (spec.name == "actr-bpr") {
    if (spec.checkpoints.empty()) throw std::runtime_error("model actr-bpr needs a checkpoint");
    bpr = load_bpr_checkpoint(a, spec.checkpoints.front());
  } else if (spec.name != "actr-repeat") {
    throw std::runtime_error("unknown model '" + spec.name + "'");
  }

  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!f.out.empty()) {
    file.open(f.out);
    if (!file) throw std::runtime_error("cannot open " + f.out);
    out = &file;
  }

  for (const std::string& uid : f.users) {
    std::int32_t user = -1;
    for (std::int32_t u = 0; u < a.corpus.n_users(); ++u)
      if (a.corpus.user_ids[static_cast<std::size_t>(u)] == uid) user = u;
    if (user < 0) throw std::runtime_error("unknown user id '" + uid + "'");
    const auto& sessions = a.corpus.sequences[static_cast<std::size_t>(user)].sessions;
    const std::int32_t n = static_cast<std::int32_t>(sessions.size());
    const std::int32_t window = std::min<std::int32_t>(a.split.L, n);
    ScoringInputs in;
    in.observed = std::span<const Session>(sessions.data() + (n - window), static_cast<std::size_t>(window));
    in.user = user;
    in.now = static_cast<double>(sessions.back().start_time) + 86400.0;  // next-day session

    std::unordered_set<std::int32_t> heard;
    for (const auto& s : in.observed)
      for (std::int32_t v : s.tracks) heard.insert(v);

    ScoredList list;
    if (spec.name == "actr-repeat")
      list = top_k_candidates(actr_repeat_scores(a.m, a.c, a.alpha, in), f.k);
    else if (spec.name == "actr-bpr")
      list = top_k(actr_bpr_scores(bpr, a.c, a.alpha, in), f.k, heard);
    else if (spec.name.rfind("pisa", 0) == 0)
      list = top_k(pisa_scores(model, a.m, a.c, a.alpha, in), f.k, heard);
    else
      list = top_k(reacta_scores(model, a.m, a.audio, a.c, a.alpha, in), f.k, heard);

    json rec;
    rec["user"] = uid;
    rec["tracks"] = json::array();
    rec["scores"] = json::array();
    rec["repeated"] = json::array();
    for (const auto& e : list) {
      rec["tracks"].push_back(a.corpus.catalog.ids[static_cast<std::size_t>(e.track)]);
      rec["scores"].push_back(e.score);
      rec["repeated"].push_back(e.repeated);
    }
    (*out) << rec.dump() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reacta: repeat-aware listening-session recommendation pipeline"};
  app.require_subcommand(1);

  std::string config_path, preset;
  app.add_option("--config", config_path, "flat JSON config file; explicit flags override its fields");
  app.add_option("--preset", preset, "parameter preset: 'desk' selects small desk-scale defaults")
      ->check(CLI::IsMember({"desk", ""}));

  GenFlags gen_flags;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic events + audio corpus");
  gen->add_option("--out-dir", gen_flags.out_dir, "output directory")->required();
  gen->add_option("--users", gen_flags.cfg.n_users, "number of users")->capture_default_str();
  gen->add_option("--tracks", gen_flags.cfg.n_tracks, "catalog size")->capture_default_str();
  gen->add_option("--sessions", gen_flags.cfg.sessions_per_user, "sessions per user")->capture_default_str();
  gen->add_option("--k", gen_flags.cfg.k, "tracks per session (paper default 10)")->capture_default_str();
  gen->add_option("--p-repeat", gen_flags.cfg.p_repeat,
                  "probability a slot replays a past listen (0.84 echoes the observed repetition)")
      ->capture_default_str();
  gen->add_option("--zipf", gen_flags.cfg.zipf_s, "popularity skew of fresh draws")->capture_default_str();
  gen->add_option("--genres", gen_flags.cfg.n_genres, "number of genres")->capture_default_str();
  gen->add_option("--audio-dim", gen_flags.cfg.d_audio, "audio embedding dimension")->capture_default_str();
  gen->add_option("--seed", gen_flags.cfg.seed, "generation seed")->capture_default_str();

  BuildFlags build_flags;
  auto* build = app.add_subcommand("build", "ingest events and build embedding/correlation/activation artifacts");
  build->add_option("--events", build_flags.events, "events file (user<TAB>track<TAB>timestamp)")->required();
  build->add_option("--audio", build_flags.audio, "audio embedding file")->required();
  build->add_option("--out-dir", build_flags.out_dir, "artifact directory")->required();
  build->add_option("--gap", build_flags.gap, "session gap in seconds")->capture_default_str();
  build->add_option("--k", build_flags.k, "tracks kept per session (default 10)")->capture_default_str();
  build->add_option("--l", build_flags.L, "observed sessions L (default 30; desk preset 8)")->capture_default_str();
  build->add_option("--n-val", build_flags.n_val, "validation instances per user (default 10)")->capture_default_str();
  build->add_option("--n-test", build_flags.n_test, "test instances per user (default 10)")->capture_default_str();
  build->add_option("--svd-dim", build_flags.svd_dim, "collaborative dimension d (default 128; desk preset 16)")
      ->capture_default_str();
  build->add_option("--alpha", build_flags.alpha, "base-level decay exponent (default 0.5)")->capture_default_str();
  build->add_option("--seed", build_flags.seed, "split + factorization seed")->capture_default_str();

  TrainFlags train_flags;
  auto* train = app.add_subcommand("train", "train a model against built artifacts");
  train->add_option("--artifacts", train_flags.artifacts, "artifact directory from 'build'")->required();
  train->add_option("--out-dir", train_flags.out_dir, "checkpoint/history directory")->required();
  train->add_option("--model", train_flags.model, "reacta-u | reacta-p | pisa-u | pisa-p | actr-bpr")
      ->capture_default_str();
  train->add_option("--lr", train_flags.tcfg.lr, "Adam learning rate (grid 0.0002..0.001)")->capture_default_str();
  train->add_option("--lambda", train_flags.tcfg.lambda, "ranking vs alignment weight (grid 0..1)")
      ->capture_default_str();
  train->add_option("--beta-enc", train_flags.tcfg.beta_enc, "encoder loss weight (grid 0.2..1)")
      ->capture_default_str();
  train->add_option("--gamma", train_flags.tcfg.gamma, "activation regression weight (grid 0.2..1)")
      ->capture_default_str();
  train->add_option("--epochs", train_flags.tcfg.epochs, "maximum epochs (cap 100)")->capture_default_str();
  train->add_option("--batch", train_flags.tcfg.batch_size, "batch size (default 512)")->capture_default_str();
  train->add_option("--patience", train_flags.tcfg.patience, "early-stop patience on validation NDCG")
      ->capture_default_str();
  train->add_option("--k-rec", train_flags.tcfg.k_rec, "negatives per instance and validation cutoff (default 10)")
      ->capture_default_str();
  train->add_option("--blocks", train_flags.blocks, "transformer blocks B (default 2)")->capture_default_str();
  train->add_option("--heads", train_flags.heads, "attention heads H (default 2)")->capture_default_str();
  train->add_option("--bpr-dim", train_flags.bpr_dim, "factor dimension for actr-bpr")->capture_default_str();
  train->add_option("--seed", train_flags.tcfg.seed, "training seed")->capture_default_str();

  EvalFlags eval_flags;
  auto* eval_cmd = app.add_subcommand("evaluate", "run the eight-metric protocol over a split");
  eval_cmd->add_option("--artifacts", eval_flags.artifacts, "artifact directory from 'build'")->required();
  eval_cmd->add_option("--model", eval_flags.models, "model[=checkpoint[,checkpoint...]] (repeatable)")
      ->take_all();
  eval_cmd->add_option("--split", eval_flags.split, "validation | test")
      ->check(CLI::IsMember({"validation", "test"}))
      ->capture_default_str();
  eval_cmd->add_option("--k", eval_flags.k, "recommendation cutoff K (default 10)")->capture_default_str();
  eval_cmd->add_option("--out", eval_flags.out, "report JSON path");

  RecommendFlags rec_flags;
  auto* rec = app.add_subcommand("recommend", "emit ranked recommendations for listed users");
  rec->add_option("--artifacts", rec_flags.artifacts, "artifact directory from 'build'")->required();
  rec->add_option("--model", rec_flags.model, "model[=checkpoint]")->required();
  rec->add_option("--users", rec_flags.users, "user ids")->required()->take_all();
  rec->add_option("--k", rec_flags.k, "list length")->capture_default_str();
  rec->add_option("--out", rec_flags.out, "output JSONL path (stdout when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    const json cfg_file = load_config_file(config_path);
    if (gen->parsed()) return cmd_gen_data(cfg_file, gen, gen_flags);
    if (build->parsed()) return cmd_build(cfg_file, build, preset, build_flags);
    if (train->parsed()) return cmd_train(cfg_file, train, train_flags);
    if (eval_cmd->parsed()) return cmd_evaluate(cfg_file, eval_cmd, eval_flags);
    if (rec->parsed()) return cmd_recommend(cfg_file, rec, rec_flags);
  } catch (const std::exception& e) {
    std::cerr << "reacta: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
