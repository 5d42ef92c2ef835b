#include "snco/policy.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "json.hpp"
#include "snco/wire.hpp"

namespace snco {

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end())
    throw std::out_of_range("params: no tensor named '" + name + "'");
  return it->second;
}

std::size_t ParamSet::numel() const {
  std::size_t total = 0;
  for (const auto& [name, t] : tensors) total += t.numel();
  return total;
}

std::size_t feature_width(Task task) {
  switch (task) {
    case Task::kTsp: return 2;
    case Task::kCvrp: return 3;
    case Task::kPctsp: return 4;
    case Task::kOp: return 3;
  }
  throw std::invalid_argument("feature_width: bad task");
}

Tensor node_features(const Instance& inst) {
  const std::size_t n = inst.n();
  Tensor feats = Tensor::zeros({n, feature_width(inst.task)});
  for (std::size_t i = 0; i < n; ++i) {
    feats.at(i, 0) = inst.xs[i];
    feats.at(i, 1) = inst.ys[i];
    switch (inst.task) {
      case Task::kTsp:
        break;
      case Task::kCvrp:
        feats.at(i, 2) = inst.demands[i];
        break;
      case Task::kPctsp:
        feats.at(i, 2) = inst.prizes[i];
        feats.at(i, 3) = inst.penalties[i];
        break;
      case Task::kOp:
        feats.at(i, 2) = inst.prizes[i];
        break;
    }
  }
  return feats;
}

namespace {

enum class Fill { kWeight, kZero, kOne, kPlaceholder };

struct Builder {
  ParamSet& p;
  Rng& rng;

  void add(const std::string& name, std::vector<std::size_t> shape, Fill fill) {
    Tensor t = Tensor::zeros(std::move(shape));
    switch (fill) {
      case Fill::kZero:
        break;
      case Fill::kOne:
        for (double& v : t.data) v = 1.0;
        break;
      case Fill::kWeight: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(t.rows() == 1
                                                 ? t.cols()
                                                 : t.shape[0]));
        for (double& v : t.data) v = rng.uniform(-bound, bound);
        break;
      }
      case Fill::kPlaceholder: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(t.cols()));
        for (double& v : t.data) v = rng.uniform(-bound, bound);
        break;
      }
    }
    p.tensors.emplace(name, std::move(t));
  }
};

}  // namespace

ParamSet init_params(Task task, std::size_t d, std::size_t heads,
                     std::size_t layers, std::size_t dff, std::uint64_t seed) {
  if (d == 0 || heads == 0 || layers == 0 || dff == 0)
    throw std::invalid_argument("init_params: dimensions must be positive");
  if (d % heads != 0)
    throw std::invalid_argument("init_params: d=" + std::to_string(d) +
                                " not divisible by heads=" +
                                std::to_string(heads));
  ParamSet p;
  p.task = task;
  p.d = d;
  p.heads = heads;
  p.layers = layers;
  p.dff = dff;
  Rng rng(seed);
  Builder b{p, rng};
  const std::size_t dh = d / heads;
  const std::size_t f = feature_width(task);

  b.add("embed.W", {f, d}, Fill::kWeight);
  b.add("embed.b", {d}, Fill::kZero);
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string pf = "enc" + std::to_string(l) + ".";
    for (std::size_t h = 0; h < heads; ++h) {
      const std::string hp = pf + "head" + std::to_string(h) + ".";
      b.add(hp + "Wq", {d, dh}, Fill::kWeight);
      b.add(hp + "Wk", {d, dh}, Fill::kWeight);
      b.add(hp + "Wv", {d, dh}, Fill::kWeight);
    }
    b.add(pf + "Wo", {d, d}, Fill::kWeight);
    b.add(pf + "ff.W1", {d, dff}, Fill::kWeight);
    b.add(pf + "ff.b1", {dff}, Fill::kZero);
    b.add(pf + "ff.W2", {dff, d}, Fill::kWeight);
    b.add(pf + "ff.b2", {d}, Fill::kZero);
    b.add(pf + "norm1.gain", {d}, Fill::kOne);
    b.add(pf + "norm1.bias", {d}, Fill::kZero);
    b.add(pf + "norm2.gain", {d}, Fill::kOne);
    b.add(pf + "norm2.bias", {d}, Fill::kZero);
  }
  b.add("dec.Wctx", {3 * d, d}, Fill::kWeight);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::string hp = "dec.head" + std::to_string(h) + ".";
    b.add(hp + "Wq", {d, dh}, Fill::kWeight);
    b.add(hp + "Wk", {d, dh}, Fill::kWeight);
    b.add(hp + "Wv", {d, dh}, Fill::kWeight);
  }
  b.add("dec.Wo", {d, d}, Fill::kWeight);
  b.add("dec.Wkf", {d, d}, Fill::kWeight);
  b.add("dec.first_ph", {d}, Fill::kPlaceholder);
  b.add("dec.cur_ph", {d}, Fill::kPlaceholder);
  b.add("proj.W1", {d, d}, Fill::kWeight);
  b.add("proj.b1", {d}, Fill::kZero);
  b.add("proj.W2", {d, d}, Fill::kWeight);
  b.add("proj.b2", {d}, Fill::kZero);
  return p;
}

namespace {

// One leaf per parameter per context; repeated lookups reuse the id.
struct Leaves {
  Tape& tape;
  const ParamSet& params;
  std::map<std::string, Tape::Id> cache;

  Tape::Id operator()(const std::string& name) {
    auto it = cache.find(name);
    if (it != cache.end()) return it->second;
    Tape::Id id = tape.leaf(params.at(name), name);
    cache.emplace(name, id);
    return id;
  }
};

Encoding encode_with(Leaves& P, const Instance& inst) {
  Tape& t = P.tape;
  const ParamSet& p = P.params;
  if (inst.task != p.task)
    throw std::invalid_argument(
        "encode: params built for " + task_name(p.task) + " (feature width " +
        std::to_string(feature_width(p.task)) + "), instance is " +
        task_name(inst.task) + " (feature width " +
        std::to_string(feature_width(inst.task)) + ")");
  const std::size_t dh = p.d / p.heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  Tape::Id x = t.constant(node_features(inst));
  x = t.add(t.matmul(x, P("embed.W")), P("embed.b"));
  for (std::size_t l = 0; l < p.layers; ++l) {
    const std::string pf = "enc" + std::to_string(l) + ".";
    std::vector<Tape::Id> head_out;
    head_out.reserve(p.heads);
    for (std::size_t h = 0; h < p.heads; ++h) {
      const std::string hp = pf + "head" + std::to_string(h) + ".";
      Tape::Id q = t.matmul(x, P(hp + "Wq"));
      Tape::Id k = t.matmul(x, P(hp + "Wk"));
      Tape::Id v = t.matmul(x, P(hp + "Wv"));
      Tape::Id attn = t.softmax(t.scale(t.matmul_nt(q, k), inv_sqrt_dh));
      head_out.push_back(t.matmul(attn, v));
    }
    Tape::Id mha = t.matmul(t.concat(head_out), P(pf + "Wo"));
    x = t.rms_norm(t.add(x, mha), P(pf + "norm1.gain"), P(pf + "norm1.bias"));
    Tape::Id ff = t.add(
        t.matmul(t.relu(t.add(t.matmul(x, P(pf + "ff.W1")), P(pf + "ff.b1"))),
                 P(pf + "ff.W2")),
        P(pf + "ff.b2"));
    x = t.rms_norm(t.add(x, ff), P(pf + "norm2.gain"), P(pf + "norm2.bias"));
  }
  return Encoding{x, t.mean_rows(x)};
}

}  // namespace

Encoding encode(Tape& tape, const ParamSet& params, const Instance& inst) {
  Leaves P{tape, params, {}};
  return encode_with(P, inst);
}

Tape::Id project(Tape& tape, const ParamSet& params, Tape::Id vec) {
  Leaves P{tape, params, {}};
  Tape::Id h = tape.relu(tape.add(tape.matmul(vec, P("proj.W1")), P("proj.b1")));
  return tape.add(tape.matmul(h, P("proj.W2")), P("proj.b2"));
}

PolicyContext make_context(Tape& tape, const ParamSet& params,
                           const Instance& inst) {
  PolicyContext ctx;
  ctx.tape = &tape;
  ctx.params = &params;
  ctx.inst = &inst;
  Leaves P{tape, params, {}};
  ctx.enc = encode_with(P, inst);
  for (std::size_t h = 0; h < params.heads; ++h) {
    const std::string hp = "dec.head" + std::to_string(h) + ".";
    ctx.keys.push_back(tape.matmul(ctx.enc.node_embeddings, P(hp + "Wk")));
    ctx.values.push_back(tape.matmul(ctx.enc.node_embeddings, P(hp + "Wv")));
    ctx.wq.push_back(P(hp + "Wq"));
  }
  ctx.pointer_keys = tape.matmul(ctx.enc.node_embeddings, P("dec.Wkf"));
  ctx.wctx = P("dec.Wctx");
  ctx.wo = P("dec.Wo");
  if (!inst.has_depot()) {
    ctx.first_ph = P("dec.first_ph");
    ctx.cur_ph = P("dec.cur_ph");
  }
  return ctx;
}

Tape::Id decode_step(PolicyContext& ctx, const DecodingState& state) {
  Tape& t = *ctx.tape;
  const ParamSet& p = *ctx.params;
  const Instance& inst = *ctx.inst;
  const std::size_t dh = p.d / p.heads;

  const std::vector<std::uint8_t> legal = legal_actions(state, inst);
  std::vector<std::uint8_t> illegal(legal.size());
  bool any_legal = false;
  for (std::size_t j = 0; j < legal.size(); ++j) {
    illegal[j] = !legal[j];
    any_legal = any_legal || legal[j];
  }
  if (!any_legal)
    throw std::invalid_argument("decode_step: no legal action in this state");

  Tape::Id cur =
      state.current < 0
          ? ctx.cur_ph
          : t.gather_rows(ctx.enc.node_embeddings,
                          {static_cast<std::size_t>(state.current)});
  Tape::Id first;
  if (inst.has_depot()) {
    first = t.gather_rows(ctx.enc.node_embeddings,
                          {static_cast<std::size_t>(inst.depot_index)});
  } else if (state.sequence.empty()) {
    first = ctx.first_ph;
  } else {
    first = t.gather_rows(ctx.enc.node_embeddings,
                          {static_cast<std::size_t>(state.sequence.front())});
  }
  Tape::Id q0 =
      t.matmul(t.concat({ctx.enc.graph_embedding, cur, first}), ctx.wctx);

  std::vector<Tape::Id> glimpses;
  glimpses.reserve(p.heads);
  for (std::size_t h = 0; h < p.heads; ++h) {
    Tape::Id q = t.matmul(q0, ctx.wq[h]);
    Tape::Id scores =
        t.scale(t.matmul_nt(q, ctx.keys[h]),
                1.0 / std::sqrt(static_cast<double>(dh)));
    Tape::Id attn = t.softmax(t.masked_fill(scores, illegal, kMaskValue));
    glimpses.push_back(t.matmul(attn, ctx.values[h]));
  }
  Tape::Id g = t.matmul(t.concat(glimpses), ctx.wo);
  Tape::Id u = t.scale(t.matmul_nt(g, ctx.pointer_keys),
                       1.0 / std::sqrt(static_cast<double>(p.d)));
  Tape::Id logits =
      t.masked_fill(t.scale(t.tanh_(u), p.logit_clip), illegal, kMaskValue);
  return t.log_softmax(logits);
}

namespace {

int pick_greedy(const Tensor& logp, const std::vector<std::uint8_t>& legal) {
  int best = -1;
  double best_v = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < logp.numel(); ++j) {
    if (!legal[j]) continue;
    if (logp.data[j] > best_v) {
      best_v = logp.data[j];
      best = static_cast<int>(j);
    }
  }
  return best;
}

int pick_sample(const Tensor& logp, const std::vector<std::uint8_t>& legal,
                Rng& rng) {
  double total = 0.0;
  for (std::size_t j = 0; j < logp.numel(); ++j)
    if (legal[j]) total += std::exp(logp.data[j]);
  const double u = rng.uniform() * total;
  double cum = 0.0;
  int last = -1;
  for (std::size_t j = 0; j < logp.numel(); ++j) {
    if (!legal[j]) continue;
    cum += std::exp(logp.data[j]);
    last = static_cast<int>(j);
    if (u < cum) return last;
  }
  return last;
}

}  // namespace

RolloutResult rollout(PolicyContext& ctx, DecodeMode mode, Rng* rng,
                      int first_node, const std::vector<int>* forced) {
  Tape& t = *ctx.tape;
  const Instance& inst = *ctx.inst;
  if (mode == DecodeMode::kSample && rng == nullptr && forced == nullptr)
    throw std::invalid_argument("rollout: sampling needs an rng");
  std::size_t forced_pos = 0;
  DecodingState st;
  if (forced != nullptr && first_node >= 0) {
    if (forced->empty() || (*forced)[0] != first_node)
      throw std::invalid_argument(
          "rollout: forced sequence does not start with the forced first node");
    st = reset(inst, first_node);
    forced_pos = 1;
  } else {
    st = reset(inst, first_node);
  }

  RolloutResult out;
  Tape::Id ll = -1;
  while (!st.terminal) {
    Tape::Id logp = decode_step(ctx, st);
    const Tensor& lp = t.value(logp);
    const std::vector<std::uint8_t> legal = legal_actions(st, inst);
    int action;
    if (forced != nullptr) {
      if (forced_pos >= forced->size())
        throw std::invalid_argument(
            "rollout: forced sequence ended before the episode did");
      action = (*forced)[forced_pos++];
    } else if (mode == DecodeMode::kGreedy) {
      action = pick_greedy(lp, legal);
    } else {
      action = pick_sample(lp, legal, *rng);
    }
    if (action < 0 || static_cast<std::size_t>(action) >= legal.size() ||
        !legal[action])
      throw std::invalid_argument("rollout: chose illegal action " +
                                  std::to_string(action));
    Tensor onehot = Tensor::zeros({lp.numel()});
    onehot.data[action] = 1.0;
    Tape::Id step_ll = t.sum(t.mul(logp, t.constant(onehot)));
    ll = ll < 0 ? step_ll : t.add(ll, step_ll);
    out.chosen_logp.push_back(lp.data[action]);
    out.log_likelihood += lp.data[action];
    step(st, action, inst);
  }
  if (forced != nullptr && forced_pos != forced->size())
    throw std::invalid_argument("rollout: forced sequence continues past the "
                                "terminal state");
  if (ll < 0) ll = t.constant(Tensor::scalar(0.0));
  out.ll = ll;
  out.sequence = st.sequence;
  out.reward_value = reward(inst, st.sequence);
  return out;
}

namespace {

constexpr char kCkptMagic[4] = {'S', 'N', 'C', 'P'};
constexpr std::uint32_t kCkptVersion = 1;

}  // namespace

void save_params(const ParamSet& p, const std::string& path) {
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
  const std::string mtext = manifest.dump();

  std::string out;
  out.append(kCkptMagic, 4);
  wire::put_u32(out, kCkptVersion);
  wire::put_u64(out, mtext.size());
  out += mtext;
  for (const auto& [name, t] : p.tensors)
    for (double v : t.data) wire::put_f64(out, v);
  wire::write_file(path, out, "checkpoint");
}

ParamSet load_params(const std::string& path) {
  const std::string buf = wire::read_file(path, "checkpoint");
  wire::Reader r{buf, 0, "checkpoint"};
  r.need(4);
  if (buf.compare(0, 4, kCkptMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic, not a SNCP file");
  r.pos = 4;
  const std::uint32_t version = r.u32();
  if (version != kCkptVersion)
    throw std::runtime_error("checkpoint: version " + std::to_string(version) +
                             ", expected " + std::to_string(kCkptVersion));
  const std::uint64_t mlen = r.u64();
  r.need(mlen);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(buf.substr(r.pos, mlen));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: bad manifest json: ") +
                             e.what());
  }
  r.pos += mlen;

  ParamSet p;
  p.task = task_from_name(manifest.at("task").get<std::string>());
  p.d = manifest.at("d").get<std::size_t>();
  p.heads = manifest.at("heads").get<std::size_t>();
  p.layers = manifest.at("layers").get<std::size_t>();
  p.dff = manifest.at("dff").get<std::size_t>();
  p.logit_clip = manifest.at("logit_clip").get<double>();
  for (const auto& entry : manifest.at("params")) {
    const std::string name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    Tensor t = Tensor::zeros(shape);
    for (double& v : t.data) v = r.f64();
    p.tensors.emplace(name, std::move(t));
  }
  if (manifest.contains("opt")) {
    std::size_t total = 0;
    for (const auto& [name, t] : p.tensors) total += t.numel();
    const std::size_t span = total * 2 * sizeof(double);
    r.need(span);
    r.pos += span;
  }
  if (r.pos != buf.size())
    throw std::runtime_error("checkpoint: " +
                             std::to_string(buf.size() - r.pos) +
                             " trailing bytes");
  // The manifest must describe the same model the hyperparameters imply.
  ParamSet ref = init_params(p.task, p.d, p.heads, p.layers, p.dff, 0);
  if (ref.tensors.size() != p.tensors.size())
    throw std::runtime_error("checkpoint: parameter list does not match "
                             "declared hyperparameters");
  for (const auto& [name, t] : ref.tensors) {
    auto it = p.tensors.find(name);
    if (it == p.tensors.end())
      throw std::runtime_error("checkpoint: missing parameter '" + name + "'");
    if (it->second.shape != t.shape)
      throw std::runtime_error("checkpoint: shape mismatch for '" + name +
                               "': " + shape_str(it->second) + " vs expected " +
                               shape_str(t));
  }
  return p;
}

}  // namespace snco
