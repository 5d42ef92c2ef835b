#include "snco/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <utility>

#include "json.hpp"
#include "snco/parallel.hpp"
#include "snco/wire.hpp"

namespace snco {

namespace {

// Tag-addressed streams: every draw is a pure function of (seed, step, item),
// so a resumed run replays the uninterrupted one bit for bit.
constexpr std::uint64_t kInitTag = 0x696e6974;  // params init
constexpr std::uint64_t kStepTag = 0x73746570;  // one row per training step
constexpr std::uint64_t kItemTag = 0x6974656d;  // one column per batch item
constexpr std::uint64_t kInstTag = 0x696e7374;  // instance coordinates
constexpr std::uint64_t kLossTag = 0x6c6f7373;  // rollouts and transforms
constexpr std::uint64_t kEvalTag = 0x6576616c;  // held-out evaluation set

void check_keys(const nlohmann::json& j,
                std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok)
      throw std::invalid_argument("train config: unknown key '" + where +
                                  it.key() + "'");
  }
}

Tensor& moment(std::map<std::string, Tensor>& store, const std::string& name,
               const Tensor& like) {
  auto it = store.find(name);
  if (it == store.end())
    it = store.emplace(name, Tensor::zeros(like.shape)).first;
  else if (it->second.shape != like.shape)
    throw std::invalid_argument("adam_update: moment shape mismatch for '" +
                                name + "'");
  return it->second;
}

bool finite_grads(const GradMap& g) {
  for (const auto& [name, t] : g)
    for (double v : t.data)
      if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

void TrainConfig::validate() const {
  if (n < 2) throw std::invalid_argument("train config: n must be >= 2");
  if (batch < 1)
    throw std::invalid_argument("train config: batch must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr))
    throw std::invalid_argument("train config: lr must be positive");
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 ||
      adam_beta2 >= 1.0)
    throw std::invalid_argument("train config: adam betas must be in [0, 1)");
  if (!(adam_eps > 0.0))
    throw std::invalid_argument("train config: adam eps must be positive");
  if (weight_decay < 0.0)
    throw std::invalid_argument("train config: weight_decay must be >= 0");
  if (d < 1 || heads < 1 || layers < 1 || dff < 1)
    throw std::invalid_argument("train config: model dims must be >= 1");
  if (d % heads != 0)
    throw std::invalid_argument("train config: d must be divisible by heads");
  sym.validate();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("train config: bad json: ") +
                                e.what());
  }
  TrainConfig c;
  try {
    check_keys(j,
               {"task", "n", "batch", "steps", "lr", "adam", "weight_decay",
                "sym", "model", "seed", "checkpoint_every", "out_dir",
                "baseline"},
               "");
    if (j.contains("task"))
      c.task = task_from_name(j.at("task").get<std::string>());
    if (j.contains("n")) c.n = j.at("n").get<std::size_t>();
    if (j.contains("batch")) c.batch = j.at("batch").get<std::size_t>();
    if (j.contains("steps")) c.steps = j.at("steps").get<std::size_t>();
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (j.contains("adam")) {
      const auto& a = j.at("adam");
      check_keys(a, {"beta1", "beta2", "eps"}, "adam.");
      if (a.contains("beta1")) c.adam_beta1 = a.at("beta1").get<double>();
      if (a.contains("beta2")) c.adam_beta2 = a.at("beta2").get<double>();
      if (a.contains("eps")) c.adam_eps = a.at("eps").get<double>();
    }
    if (j.contains("weight_decay"))
      c.weight_decay = j.at("weight_decay").get<double>();
    if (j.contains("sym")) {
      const auto& s = j.at("sym");
      check_keys(s, {"alpha", "beta", "K", "L"}, "sym.");
      if (s.contains("alpha")) c.sym.alpha = s.at("alpha").get<double>();
      if (s.contains("beta")) c.sym.beta = s.at("beta").get<double>();
      if (s.contains("K")) c.sym.K = s.at("K").get<std::size_t>();
      if (s.contains("L")) c.sym.L = s.at("L").get<std::size_t>();
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      check_keys(m, {"d", "heads", "layers", "dff"}, "model.");
      if (m.contains("d")) c.d = m.at("d").get<std::size_t>();
      if (m.contains("heads")) c.heads = m.at("heads").get<std::size_t>();
      if (m.contains("layers")) c.layers = m.at("layers").get<std::size_t>();
      if (m.contains("dff")) c.dff = m.at("dff").get<std::size_t>();
    }
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("checkpoint_every"))
      c.checkpoint_every = j.at("checkpoint_every").get<std::size_t>();
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("baseline")) {
      const std::string b = j.at("baseline").get<std::string>();
      if (b == "shared")
        c.baseline_mode = BaselineMode::kShared;
      else if (b == "none")
        c.baseline_mode = BaselineMode::kNone;
      else
        throw std::invalid_argument("train config: baseline must be 'shared' "
                                    "or 'none', got '" + b + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("train config: ") + e.what());
  }
  return c;
}

std::string TrainConfig::to_json() const {
  nlohmann::json j;
  j["task"] = task_name(task);
  j["n"] = n;
  j["batch"] = batch;
  j["steps"] = steps;
  j["lr"] = lr;
  j["adam"] = {{"beta1", adam_beta1}, {"beta2", adam_beta2}, {"eps", adam_eps}};
  j["weight_decay"] = weight_decay;
  j["sym"] = {{"alpha", sym.alpha},
              {"beta", sym.beta},
              {"K", sym.K},
              {"L", sym.L}};
  j["model"] = {{"d", d}, {"heads", heads}, {"layers", layers}, {"dff", dff}};
  j["seed"] = seed;
  j["checkpoint_every"] = checkpoint_every;
  j["out_dir"] = out_dir;
  j["baseline"] = baseline_mode == BaselineMode::kShared ? "shared" : "none";
  return j.dump(2);
}

void adam_update(ParamSet& params, const GradMap& grads, OptState& opt,
                 double lr, double beta1, double beta2, double eps,
                 double weight_decay) {
  for (const auto& [name, g] : grads) {
    auto it = params.tensors.find(name);
    if (it == params.tensors.end())
      throw std::invalid_argument(
          "adam_update: gradient for unknown parameter '" + name + "'");
    if (g.shape != it->second.shape)
      throw std::invalid_argument("adam_update: gradient shape mismatch for '" +
                                  name + "'");
    for (double v : g.data)
      if (!std::isfinite(v))
        throw std::invalid_argument("adam_update: non-finite gradient for '" +
                                    name + "'");
  }
  opt.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, double(opt.step));
  const double bc2 = 1.0 - std::pow(beta2, double(opt.step));
  for (auto& [name, p] : params.tensors) {
    Tensor& m = moment(opt.m, name, p);
    Tensor& v = moment(opt.v, name, p);
    auto git = grads.find(name);
    const Tensor* g = git == grads.end() ? nullptr : &git->second;
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double gi = g ? g->data[i] : 0.0;
      m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * gi;
      v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * gi * gi;
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      p.data[i] -=
          lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p.data[i]);
    }
  }
}

namespace {

constexpr char kCkptMagic[4] = {'S', 'N', 'C', 'P'};
constexpr std::uint32_t kCkptVersion = 1;

}  // namespace

void save_train_checkpoint(const ParamSet& p, const OptState& opt,
                           const std::string& path) {
  for (const auto& [name, t] : opt.m)
    if (p.tensors.find(name) == p.tensors.end())
      throw std::invalid_argument(
          "checkpoint: optimizer moment for unknown parameter '" + name + "'");
  for (const auto& [name, t] : opt.v)
    if (p.tensors.find(name) == p.tensors.end())
      throw std::invalid_argument(
          "checkpoint: optimizer moment for unknown parameter '" + name + "'");

  nlohmann::json manifest;
  manifest["format"] = "snco-checkpoint";
  manifest["version"] = kCkptVersion;
  manifest["task"] = task_name(p.task);
  manifest["d"] = p.d;
  manifest["heads"] = p.heads;
  manifest["layers"] = p.layers;
  manifest["dff"] = p.dff;
  manifest["logit_clip"] = p.logit_clip;
  nlohmann::json names = nlohmann::json::array();
  for (const auto& [name, t] : p.tensors)
    names.push_back({{"name", name}, {"shape", t.shape}});
  manifest["params"] = names;
  manifest["opt"] = {{"step", opt.step}};
  const std::string mtext = manifest.dump();

  std::string out;
  out.append(kCkptMagic, 4);
  wire::put_u32(out, kCkptVersion);
  wire::put_u64(out, mtext.size());
  out += mtext;
  for (const auto& [name, t] : p.tensors)
    for (double v : t.data) wire::put_f64(out, v);
  // Moment blobs follow the manifest order; never-updated moments are zero.
  for (const auto* store : {&opt.m, &opt.v}) {
    for (const auto& [name, t] : p.tensors) {
      auto it = store->find(name);
      if (it != store->end() && it->second.shape != t.shape)
        throw std::invalid_argument(
            "checkpoint: optimizer moment shape mismatch for '" + name + "'");
      if (it == store->end()) {
        for (std::size_t i = 0; i < t.numel(); ++i) wire::put_f64(out, 0.0);
      } else {
        for (double v : it->second.data) wire::put_f64(out, v);
      }
    }
  }
  wire::write_file(path, out, "checkpoint");
}

std::pair<ParamSet, OptState> load_train_checkpoint(const std::string& path) {
  ParamSet p = load_params(path);  // full container validation, skips moments
  const std::string buf = wire::read_file(path, "checkpoint");
  wire::Reader r{buf, 4, "checkpoint"};
  (void)r.u32();
  const std::uint64_t mlen = r.u64();
  r.need(mlen);
  const nlohmann::json manifest = nlohmann::json::parse(buf.substr(r.pos, mlen));
  r.pos += mlen;
  if (!manifest.contains("opt"))
    throw std::runtime_error(
        "checkpoint: no optimizer state in this file (parameters only)");
  OptState opt;
  opt.step = manifest.at("opt").at("step").get<std::uint64_t>();

  std::vector<std::pair<std::string, std::vector<std::size_t>>> order;
  std::size_t total = 0;
  for (const auto& entry : manifest.at("params")) {
    auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    std::size_t numel = 1;
    for (std::size_t s : shape) numel *= s;
    total += numel;
    order.emplace_back(entry.at("name").get<std::string>(), std::move(shape));
  }
  r.need(total * sizeof(double));
  r.pos += total * sizeof(double);  // parameter blobs, already in `p`
  for (auto* store : {&opt.m, &opt.v}) {
    for (const auto& [name, shape] : order) {
      Tensor t = Tensor::zeros(shape);
      for (double& v : t.data) v = r.f64();
      store->emplace(name, std::move(t));
    }
  }
  return {std::move(p), std::move(opt)};
}

std::string metrics_csv(const std::vector<StepMetrics>& rows) {
  std::string out = "step,mean_cost,best_cost,loss_inv,baseline,seconds\n";
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g,%.3f\n",
                  r.step, r.mean_cost, r.best_cost, r.loss_inv, r.baseline,
                  r.seconds);
    out += line;
  }
  return out;
}

TrainResult train(const TrainConfig& cfg, const std::string& resume_checkpoint) {
  cfg.validate();
  Rng root(cfg.seed);
  TrainResult res;
  if (resume_checkpoint.empty()) {
    res.params = init_params(cfg.task, cfg.d, cfg.heads, cfg.layers, cfg.dff,
                             root.derive(kInitTag));
  } else {
    auto loaded = load_train_checkpoint(resume_checkpoint);
    ParamSet& p = loaded.first;
    if (p.task != cfg.task || p.d != cfg.d || p.heads != cfg.heads ||
        p.layers != cfg.layers || p.dff != cfg.dff)
      throw std::invalid_argument(
          "train: resume checkpoint model does not match the config");
    if (loaded.second.step > cfg.steps)
      throw std::invalid_argument(
          "train: resume checkpoint is already past " +
          std::to_string(cfg.steps) + " steps");
    res.params = std::move(loaded.first);
    res.opt = std::move(loaded.second);
  }
  if (!cfg.out_dir.empty())
    std::filesystem::create_directories(cfg.out_dir);

  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t s = res.opt.step; s < cfg.steps; ++s) {
    Rng srow = root.split(kStepTag + s);
    std::vector<StepResult> items(cfg.batch);
    parallel_for(cfg.batch, [&](std::size_t i) {
      Rng item = srow.split(kItemTag + i);
      const Instance inst = generate(cfg.task, cfg.n, item.derive(kInstTag));
      Rng loss_rng = item.split(kLossTag);
      items[i] =
          total_loss_step(res.params, inst, cfg.sym, loss_rng,
                          cfg.baseline_mode);
    });

    GradMap acc;
    const double inv_b = 1.0 / double(cfg.batch);
    StepMetrics row;
    row.best_cost = std::numeric_limits<double>::infinity();
    for (const StepResult& it : items) {
      grad_axpy(acc, it.grads, inv_b);
      row.mean_cost += -it.mean_reward * inv_b;
      row.best_cost = std::min(row.best_cost, -it.best_reward);
      row.loss_inv += it.loss_inv_value * inv_b;
      row.baseline += it.baseline * inv_b;
    }
    if (!std::isfinite(row.mean_cost) || !std::isfinite(row.loss_inv) ||
        !std::isfinite(row.baseline) || !finite_grads(acc)) {
      res.aborted = true;  // last finite params and moments stay in place
      break;
    }
    adam_update(res.params, acc, res.opt, cfg.lr, cfg.adam_beta1,
                cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay);
    row.step = s + 1;
    row.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    res.metrics.push_back(row);
    if (!cfg.out_dir.empty() && cfg.checkpoint_every > 0 &&
        (s + 1) % cfg.checkpoint_every == 0)
      save_train_checkpoint(res.params, res.opt,
                            cfg.out_dir + "/checkpoint_step_" +
                                std::to_string(s + 1) + ".bin");
  }
  res.completed_steps = res.opt.step;

  if (!cfg.out_dir.empty()) {
    save_train_checkpoint(res.params, res.opt,
                          cfg.out_dir + "/checkpoint_final.bin");
    wire::write_file(cfg.out_dir + "/metrics.csv", metrics_csv(res.metrics),
                     "metrics");
    nlohmann::json summary;
    summary["config"] = nlohmann::json::parse(cfg.to_json());
    summary["completed_steps"] = res.completed_steps;
    summary["aborted"] = res.aborted;
    summary["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    if (!res.metrics.empty()) {
      summary["final_mean_cost"] = res.metrics.back().mean_cost;
      summary["final_loss_inv"] = res.metrics.back().loss_inv;
    }
    wire::write_file(cfg.out_dir + "/summary.json", summary.dump(2) + "\n",
                     "summary");
  }
  return res;
}

Dataset eval_set(const TrainConfig& cfg, std::size_t count) {
  return make_dataset(cfg.task, cfg.n, count, Rng(cfg.seed).derive(kEvalTag));
}

}  // namespace snco
