#include "snco/instgen.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "snco/rng.hpp"
#include "snco/wire.hpp"

namespace snco {

double GenConfig::band(const std::vector<Band>& table, std::size_t n) const {
  for (const Band& b : table)
    if (n <= b.max_n) return b.value;
  throw std::invalid_argument("gen config: band table does not cover n=" +
                              std::to_string(n));
}

Instance generate(Task task, std::size_t n, std::uint64_t seed,
                  const GenConfig& cfg) {
  const std::size_t min_n = task == Task::kTsp ? 2 : 3;
  if (n < min_n)
    throw std::invalid_argument("generate: " + task_name(task) + " needs n >= " +
                                std::to_string(min_n) + ", got " +
                                std::to_string(n));
  Rng rng(seed);
  Instance inst;
  inst.task = task;
  inst.xs.resize(n);
  inst.ys.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    inst.xs[i] = rng.uniform(cfg.coord_lo, cfg.coord_hi);
    inst.ys[i] = rng.uniform(cfg.coord_lo, cfg.coord_hi);
  }
  switch (task) {
    case Task::kTsp:
      break;
    case Task::kCvrp: {
      if (cfg.demand_levels < 1)
        throw std::invalid_argument("gen config: demand_levels must be >= 1");
      inst.depot_index = 0;
      const double cap = cfg.band(cfg.cvrp_capacity, n);
      inst.demands.resize(n, 0.0);
      for (std::size_t i = 1; i < n; ++i)
        inst.demands[i] =
            static_cast<double>(1 + rng.below(cfg.demand_levels)) / cap;
      inst.globals["capacity"] = 1.0;
      break;
    }
    case Task::kPctsp: {
      inst.depot_index = 0;
      const double pf = cfg.band(cfg.pctsp_penalty_factor, n);
      inst.prizes.resize(n, 0.0);
      inst.penalties.resize(n, 0.0);
      const double dn = static_cast<double>(n);
      for (std::size_t i = 1; i < n; ++i) {
        inst.prizes[i] = rng.uniform() * cfg.pctsp_prize_scale / dn;
        inst.penalties[i] = rng.uniform(0.0, cfg.pctsp_penalty_max) * pf / dn;
      }
      inst.globals["prize_threshold"] = cfg.pctsp_threshold;
      break;
    }
    case Task::kOp: {
      inst.depot_index = 0;
      inst.prizes.resize(n, 0.0);
      for (std::size_t i = 1; i < n; ++i)
        inst.prizes[i] = rng.uniform(0.0, cfg.op_prize_max);
      inst.globals["t_max"] = cfg.band(cfg.op_tmax, n);
      break;
    }
  }
  inst.validate();
  return inst;
}

Dataset make_dataset(Task task, std::size_t n, std::size_t count,
                     std::uint64_t seed, const GenConfig& cfg) {
  if (count == 0) throw std::invalid_argument("make_dataset: count must be > 0");
  Dataset ds;
  ds.task = task;
  ds.n = n;
  ds.seed = seed;
  ds.instances.reserve(count);
  Rng root(seed);
  for (std::size_t i = 0; i < count; ++i)
    ds.instances.push_back(generate(task, n, root.derive(i), cfg));
  return ds;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& what) {
  throw std::invalid_argument("tsplib: line " + std::to_string(line_no) + ": " +
                              what);
}

}  // namespace

Instance parse_tsplib(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::string name, type, edge_weight_type;
  long long dimension = -1;
  bool saw_coords = false;
  std::vector<double> rx, ry;

  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty()) continue;
    if (t == "EOF") break;
    if (t == "NODE_COORD_SECTION") {
      if (dimension <= 0)
        parse_fail(line_no, "NODE_COORD_SECTION before DIMENSION");
      saw_coords = true;
      rx.assign(dimension, 0.0);
      ry.assign(dimension, 0.0);
      std::vector<bool> seen(dimension, false);
      for (long long k = 0; k < dimension; ++k) {
        if (!std::getline(in, line))
          parse_fail(line_no, "unexpected end of file inside coord section");
        ++line_no;
        std::istringstream ls(trim(line));
        long long idx;
        double x, y;
        if (!(ls >> idx >> x >> y))
          parse_fail(line_no, "malformed coord line '" + trim(line) + "'");
        std::string rest;
        if (ls >> rest)
          parse_fail(line_no, "trailing token '" + rest + "' on coord line");
        if (idx < 1 || idx > dimension)
          parse_fail(line_no, "node index " + std::to_string(idx) +
                                  " outside 1.." + std::to_string(dimension));
        if (seen[idx - 1])
          parse_fail(line_no, "duplicate node index " + std::to_string(idx));
        seen[idx - 1] = true;
        rx[idx - 1] = x;
        ry[idx - 1] = y;
      }
      continue;
    }
    std::size_t colon = t.find(':');
    if (colon == std::string::npos)
      parse_fail(line_no, "expected 'KEYWORD : value', got '" + t + "'");
    std::string key = trim(t.substr(0, colon));
    std::string val = trim(t.substr(colon + 1));
    if (key == "NAME") name = val;
    else if (key == "TYPE") type = val;
    else if (key == "DIMENSION") {
      try {
        dimension = std::stoll(val);
      } catch (const std::exception&) {
        parse_fail(line_no, "bad DIMENSION '" + val + "'");
      }
      if (dimension < 2) parse_fail(line_no, "DIMENSION must be >= 2");
    } else if (key == "EDGE_WEIGHT_TYPE") edge_weight_type = val;
    // COMMENT and any other keywords are ignored.
  }

  if (!type.empty() && type != "TSP")
    throw std::invalid_argument("tsplib: unsupported TYPE '" + type +
                                "' (only TSP)");
  if (edge_weight_type != "EUC_2D")
    throw std::invalid_argument("tsplib: unsupported EDGE_WEIGHT_TYPE '" +
                                edge_weight_type + "' (only EUC_2D)");
  if (!saw_coords)
    throw std::invalid_argument("tsplib: missing NODE_COORD_SECTION");

  const auto [xmin_it, xmax_it] = std::minmax_element(rx.begin(), rx.end());
  const auto [ymin_it, ymax_it] = std::minmax_element(ry.begin(), ry.end());
  const double xmin = *xmin_it, ymin = *ymin_it;
  const double scale = std::max(*xmax_it - xmin, *ymax_it - ymin);
  if (!(scale > 0.0))
    throw std::invalid_argument("tsplib: degenerate instance, all nodes equal");

  Instance inst;
  inst.task = Task::kTsp;
  inst.name = name;
  inst.xs.resize(rx.size());
  inst.ys.resize(ry.size());
  for (std::size_t i = 0; i < rx.size(); ++i) {
    inst.xs[i] = (rx[i] - xmin) / scale;
    inst.ys[i] = (ry[i] - ymin) / scale;
  }
  inst.globals["scale"] = scale;
  inst.globals["offset_x"] = xmin;
  inst.globals["offset_y"] = ymin;
  inst.validate();
  return inst;
}

std::string to_tsplib(const Instance& inst, const std::string& name) {
  if (inst.task != Task::kTsp)
    throw std::invalid_argument("to_tsplib: only tsp instances");
  std::ostringstream out;
  out.precision(17);
  out << "NAME : " << (name.empty() ? (inst.name.empty() ? "snco" : inst.name)
                                    : name)
      << "\n";
  out << "TYPE : TSP\n";
  out << "DIMENSION : " << inst.n() << "\n";
  out << "EDGE_WEIGHT_TYPE : EUC_2D\n";
  out << "NODE_COORD_SECTION\n";
  for (std::size_t i = 0; i < inst.n(); ++i)
    out << (i + 1) << " " << inst.xs[i] << " " << inst.ys[i] << "\n";
  out << "EOF\n";
  return out.str();
}

namespace {

constexpr char kMagic[4] = {'S', 'N', 'C', 'O'};
constexpr std::uint32_t kVersion = 1;

using wire::put_f64;
using wire::put_u32;
using wire::put_u64;

// Block name -> accessor on Instance.
std::vector<double>* block_field(Instance& inst, const std::string& name) {
  if (name == "demand") return &inst.demands;
  if (name == "prize") return &inst.prizes;
  if (name == "penalty") return &inst.penalties;
  return nullptr;
}

const std::vector<double>* block_field(const Instance& inst,
                                       const std::string& name) {
  return block_field(const_cast<Instance&>(inst), name);
}

std::vector<std::string> blocks_for(Task task) {
  switch (task) {
    case Task::kTsp: return {"coords"};
    case Task::kCvrp: return {"coords", "demand"};
    case Task::kPctsp: return {"coords", "prize", "penalty"};
    case Task::kOp: return {"coords", "prize"};
  }
  throw std::invalid_argument("blocks_for: bad task");
}

std::vector<std::string> globals_for(Task task) {
  switch (task) {
    case Task::kTsp: return {};
    case Task::kCvrp: return {"capacity"};
    case Task::kPctsp: return {"prize_threshold"};
    case Task::kOp: return {"t_max"};
  }
  throw std::invalid_argument("globals_for: bad task");
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  ds.validate();
  const std::vector<std::string> blocks = blocks_for(ds.task);
  const std::vector<std::string> globals = globals_for(ds.task);

  nlohmann::json header;
  header["task"] = task_name(ds.task);
  header["n"] = ds.n;
  header["count"] = ds.count();
  header["seed"] = ds.seed;
  header["blocks"] = blocks;
  header["globals"] = globals;
  const std::string htext = header.dump();

  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u64(out, htext.size());
  out += htext;
  for (const std::string& block : blocks) {
    for (const Instance& inst : ds.instances) {
      if (block == "coords") {
        for (std::size_t i = 0; i < inst.n(); ++i) {
          put_f64(out, inst.xs[i]);
          put_f64(out, inst.ys[i]);
        }
      } else {
        for (double v : *block_field(inst, block)) put_f64(out, v);
      }
    }
  }
  for (const std::string& g : globals)
    for (const Instance& inst : ds.instances) put_f64(out, inst.globals.at(g));

  wire::write_file(path, out, "dataset");
}

Dataset load_dataset(const std::string& path) {
  const std::string buf = wire::read_file(path, "dataset");

  wire::Reader r{buf, 0, "dataset"};
  r.need(4);
  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw std::runtime_error("dataset: bad magic, not a SNCO file");
  r.pos = 4;
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw std::runtime_error("dataset: version " + std::to_string(version) +
                             ", expected " + std::to_string(kVersion));
  const std::uint64_t hlen = r.u64();
  r.need(hlen);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.substr(r.pos, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("dataset: bad header json: ") +
                             e.what());
  }
  r.pos += hlen;

  Dataset ds;
  ds.task = task_from_name(header.at("task").get<std::string>());
  ds.n = header.at("n").get<std::size_t>();
  ds.seed = header.at("seed").get<std::uint64_t>();
  const std::size_t count = header.at("count").get<std::size_t>();
  const auto blocks = header.at("blocks").get<std::vector<std::string>>();
  const auto globals = header.at("globals").get<std::vector<std::string>>();
  if (blocks != blocks_for(ds.task))
    throw std::runtime_error("dataset: block list does not match task " +
                             task_name(ds.task));
  if (globals != globals_for(ds.task))
    throw std::runtime_error("dataset: globals list does not match task " +
                             task_name(ds.task));

  ds.instances.assign(count, Instance{});
  for (Instance& inst : ds.instances) {
    inst.task = ds.task;
    inst.depot_index = ds.task == Task::kTsp ? -1 : 0;
  }
  for (const std::string& block : blocks) {
    for (Instance& inst : ds.instances) {
      if (block == "coords") {
        inst.xs.resize(ds.n);
        inst.ys.resize(ds.n);
        for (std::size_t i = 0; i < ds.n; ++i) {
          inst.xs[i] = r.f64();
          inst.ys[i] = r.f64();
        }
      } else {
        std::vector<double>* f = block_field(inst, block);
        f->resize(ds.n);
        for (std::size_t i = 0; i < ds.n; ++i) (*f)[i] = r.f64();
      }
    }
  }
  for (const std::string& g : globals)
    for (Instance& inst : ds.instances) inst.globals[g] = r.f64();
  if (r.pos != buf.size())
    throw std::runtime_error("dataset: " + std::to_string(buf.size() - r.pos) +
                             " trailing bytes");
  ds.validate();
  return ds;
}

}  // namespace snco
