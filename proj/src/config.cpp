// SPDX-License-Identifier: Apache-2.0

#include "hzp/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace hzp {

const char* to_string(GroupKind kind) {
  switch (kind) {
    case GroupKind::Z1: return "Z1";
    case GroupKind::Z2: return "Z2";
    case GroupKind::Z3: return "Z3";
    case GroupKind::DzpReplica: return "DZP-replica";
    case GroupKind::PP: return "PP";
    case GroupKind::CP: return "CP";
    case GroupKind::TP: return "TP";
  }
  return "?";
}

namespace {

void require(bool ok, ValidationError::Code code, const std::string& msg) {
  if (!ok) throw ValidationError(code, msg);
}

bool divides(int a, int b) { return a >= 1 && b % a == 0; }

}  // namespace

ValidatedConfig validate_config(const ModelSpec& spec, const ParallelConfig& cfg,
                                const Topology& topo) {
  require(spec.num_layers >= 0 && spec.params_per_layer >= 0 &&
              spec.embedding_params >= 0,
          ValidationError::Code::BadField, "negative model field");
  require(spec.total_params() > 0, ValidationError::Code::EmptyModel,
          "model has zero parameters");
  require(spec.num_microbatches >= 1, ValidationError::Code::BadField,
          "num_microbatches must be >= 1");
  require(spec.seq_len >= 1, ValidationError::Code::BadField,
          "seq_len must be >= 1");
  require(spec.micro_batch_size >= 1, ValidationError::Code::BadField,
          "micro_batch_size must be >= 1");

  require(cfg.dp >= 1 && cfg.pp >= 1 && cfg.vpp >= 1 && cfg.cp >= 1 &&
              cfg.tp >= 1,
          ValidationError::Code::BadField, "parallel degrees must be >= 1");
  for (auto [z, name] : {std::pair{cfg.z1, "z1"}, {cfg.z2, "z2"}, {cfg.z3, "z3"}}) {
    std::ostringstream msg;
    msg << name << "=" << z << " does not divide dp=" << cfg.dp;
    require(divides(z, cfg.dp), ValidationError::Code::NonDivisible, msg.str());
  }
  require(cfg.vpp == 1 || cfg.pp > 1, ValidationError::Code::BadField,
          "vpp > 1 requires pp > 1");

  require(topo.num_nodes >= 1 && topo.ranks_per_node >= 1,
          ValidationError::Code::BadField, "topology counts must be >= 1");
  require(topo.inter_bw > 0 && topo.intra_bw >= topo.inter_bw,
          ValidationError::Code::BadField,
          "bandwidths must satisfy intra_bw >= inter_bw > 0");
  require(topo.intra_latency >= 0 && topo.inter_latency >= 0,
          ValidationError::Code::BadField, "latencies must be >= 0");

  const std::int64_t product = static_cast<std::int64_t>(cfg.dp) * cfg.pp *
                               cfg.cp * cfg.tp;
  {
    std::ostringstream msg;
    msg << "dp*pp*cp*tp = " << product << " but topology has "
        << topo.total_ranks() << " ranks";
    require(product == topo.total_ranks(), ValidationError::Code::NonDivisible,
            msg.str());
  }

  ValidatedConfig out;
  out.model = spec;
  out.parallel = cfg;
  out.topo = topo;
  out.total_params = spec.total_params();
  out.total_ranks = topo.total_ranks();
  const int replicas = cfg.pp * cfg.cp * cfg.tp;
  out.groups_per_kind[GroupKind::Z1] = replicas * (cfg.dp / cfg.z1);
  out.groups_per_kind[GroupKind::Z2] = replicas * (cfg.dp / cfg.z2);
  out.groups_per_kind[GroupKind::Z3] = replicas * (cfg.dp / cfg.z3);
  out.groups_per_kind[GroupKind::DzpReplica] = replicas * cfg.z2;
  out.groups_per_kind[GroupKind::PP] = out.total_ranks / cfg.pp;
  out.groups_per_kind[GroupKind::CP] = out.total_ranks / cfg.cp;
  out.groups_per_kind[GroupKind::TP] = out.total_ranks / cfg.tp;
  return out;
}

namespace {

bool group_spans_nodes(const std::vector<int>& ranks, const Topology& topo) {
  if (ranks.empty()) return false;
  const int node0 = topo.node_of(ranks.front());
  for (int r : ranks) {
    if (topo.node_of(r) != node0) return true;
  }
  return false;
}

// Global rank layout: dp is the fastest-varying (contiguous) dimension, so
// sharding groups are contiguous rank ranges. Outer dimensions in order
// pp, cp, tp index the dp-sized blocks.
void add_contiguous_groups(GroupMap& map, GroupKind kind, int group_size,
                           int dp, int outer, const Topology& topo) {
  auto& groups = map[kind];
  for (int block = 0; block < outer; ++block) {
    const int base = block * dp;
    for (int start = 0; start < dp; start += group_size) {
      ProcessGroup g;
      g.kind = kind;
      for (int i = 0; i < group_size; ++i) g.ranks.push_back(base + start + i);
      g.spans_nodes = group_spans_nodes(g.ranks, topo);
      groups.push_back(std::move(g));
    }
  }
}

}  // namespace

GroupMap build_process_groups(const ParallelConfig& cfg, const Topology& topo) {
  GroupMap map;
  const int outer = cfg.pp * cfg.cp * cfg.tp;
  add_contiguous_groups(map, GroupKind::Z1, cfg.z1, cfg.dp, outer, topo);
  add_contiguous_groups(map, GroupKind::Z2, cfg.z2, cfg.dp, outer, topo);
  add_contiguous_groups(map, GroupKind::Z3, cfg.z3, cfg.dp, outer, topo);

  // DZP-replica groups: rank i of every Z2 group that holds shard index i.
  const int replicas = cfg.dp / cfg.z2;
  for (int block = 0; block < outer; ++block) {
    const int base = block * cfg.dp;
    for (int i = 0; i < cfg.z2; ++i) {
      ProcessGroup g;
      g.kind = GroupKind::DzpReplica;
      for (int rep = 0; rep < replicas; ++rep)
        g.ranks.push_back(base + rep * cfg.z2 + i);
      g.spans_nodes = group_spans_nodes(g.ranks, topo);
      map[GroupKind::DzpReplica].push_back(std::move(g));
    }
  }

  // Outer dimensions: strided groups over the (pp, cp, tp, dp) layout.
  const int total = cfg.dp * outer;
  for (const auto& [kind, degree, stride] :
       std::initializer_list<std::tuple<GroupKind, int, int>>{
           {GroupKind::PP, cfg.pp, cfg.dp * cfg.tp * cfg.cp},
           {GroupKind::CP, cfg.cp, cfg.dp * cfg.tp},
           {GroupKind::TP, cfg.tp, cfg.dp}}) {
    std::set<int> seen;
    for (int r = 0; r < total; ++r) {
      if (seen.count(r)) continue;
      ProcessGroup g;
      g.kind = kind;
      for (int k = 0; k < degree; ++k) {
        const int member = r + k * stride;
        g.ranks.push_back(member);
        seen.insert(member);
      }
      g.spans_nodes = group_spans_nodes(g.ranks, topo);
      map[kind].push_back(std::move(g));
    }
  }
  return map;
}

namespace {

using nlohmann::json;

template <typename T>
void read_field(const json& j, const char* key, T& out, bool required = true) {
  if (j.contains(key)) {
    out = j.at(key).get<T>();
  } else if (required) {
    throw ValidationError(ValidationError::Code::BadField,
                          std::string("missing config field: ") + key);
  }
}

}  // namespace

ValidatedConfig parse_config_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(ValidationError::Code::BadField,
                          std::string("config parse error: ") + e.what());
  }
  ModelSpec spec;
  ParallelConfig cfg;
  Topology topo;
  try {
    const json& m = j.at("model");
    read_field(m, "name", spec.name, false);
    read_field(m, "num_layers", spec.num_layers);
    read_field(m, "params_per_layer", spec.params_per_layer);
    read_field(m, "embedding_params", spec.embedding_params, false);
    read_field(m, "seq_len", spec.seq_len, false);
    read_field(m, "micro_batch_size", spec.micro_batch_size, false);
    read_field(m, "num_microbatches", spec.num_microbatches, false);
    read_field(m, "flops_per_token_per_layer", spec.flops_per_token_per_layer,
               false);
    read_field(m, "hidden_size", spec.hidden_size, false);

    const json& p = j.at("parallel");
    read_field(p, "dp", cfg.dp);
    read_field(p, "z1", cfg.z1, false);
    read_field(p, "z2", cfg.z2, false);
    read_field(p, "z3", cfg.z3, false);
    read_field(p, "pp", cfg.pp, false);
    read_field(p, "vpp", cfg.vpp, false);
    read_field(p, "cp", cfg.cp, false);
    read_field(p, "tp", cfg.tp, false);

    const json& t = j.at("topology");
    read_field(t, "num_nodes", topo.num_nodes);
    read_field(t, "ranks_per_node", topo.ranks_per_node);
    read_field(t, "intra_bw", topo.intra_bw);
    read_field(t, "inter_bw", topo.inter_bw);
    read_field(t, "intra_latency", topo.intra_latency, false);
    read_field(t, "inter_latency", topo.inter_latency, false);
  } catch (const json::exception& e) {
    throw ValidationError(ValidationError::Code::BadField,
                          std::string("config structure error: ") + e.what());
  }
  return validate_config(spec, cfg, topo);
}

ValidatedConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ValidationError(ValidationError::Code::BadField,
                          "cannot open config file: " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_json(buf.str());
}

}  // namespace hzp
