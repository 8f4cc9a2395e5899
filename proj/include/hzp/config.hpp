// SPDX-License-Identifier: Apache-2.0
//
// Domain vocabulary: model shape, parallel configuration, cluster topology,
// process-group construction and validation.

#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace hzp {

struct ModelSpec {
  std::string name;
  std::int64_t num_layers = 0;
  std::int64_t params_per_layer = 0;
  std::int64_t embedding_params = 0;
  std::int64_t seq_len = 1;
  std::int64_t micro_batch_size = 1;
  std::int64_t num_microbatches = 1;
  double flops_per_token_per_layer = 0.0;
  // Optional transformer hidden size; 0 means "derive from params_per_layer".
  std::int64_t hidden_size = 0;

  std::int64_t total_params() const {
    return num_layers * params_per_layer + embedding_params;
  }
};

struct ParallelConfig {
  int dp = 1;   // data-parallel world size
  int z1 = 1;   // optimizer-state sharding group size
  int z2 = 1;   // gradient sharding group size
  int z3 = 1;   // parameter sharding group size
  int pp = 1;   // pipeline stages
  int vpp = 1;  // virtual pipeline stages per rank
  int cp = 1;   // context-parallel degree
  int tp = 1;   // tensor-parallel degree (comparison paths only)
};

struct Topology {
  int num_nodes = 1;
  int ranks_per_node = 1;
  double intra_bw = 1.0;       // bytes/second
  double inter_bw = 1.0;       // bytes/second
  double intra_latency = 0.0;  // seconds
  double inter_latency = 0.0;  // seconds

  int total_ranks() const { return num_nodes * ranks_per_node; }
  int node_of(int rank) const { return rank / ranks_per_node; }
};

enum class GroupKind { Z1, Z2, Z3, DzpReplica, PP, CP, TP };

const char* to_string(GroupKind kind);

struct ProcessGroup {
  GroupKind kind = GroupKind::Z3;
  std::vector<int> ranks;
  bool spans_nodes = false;

  int size() const { return static_cast<int>(ranks.size()); }
};

class ValidationError : public std::runtime_error {
 public:
  enum class Code { NonDivisible, EmptyModel, BadField };
  ValidationError(Code code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

// Configuration with derived fields filled in by validate_config().
struct ValidatedConfig {
  ModelSpec model;
  ParallelConfig parallel;
  Topology topo;
  std::int64_t total_params = 0;
  int total_ranks = 0;
  std::map<GroupKind, int> groups_per_kind;
};

ValidatedConfig validate_config(const ModelSpec& spec, const ParallelConfig& cfg,
                                const Topology& topo);

using GroupMap = std::map<GroupKind, std::vector<ProcessGroup>>;

// Contiguous node-major placement: rank r lives on node r / ranks_per_node.
// Each sharding group of size g is a contiguous rank range; DZP-replica groups
// connect rank i of every Z2 group holding the same shard index.
GroupMap build_process_groups(const ParallelConfig& cfg, const Topology& topo);

// Config file loading (JSON with sections model / parallel / topology).
ValidatedConfig load_config_file(const std::string& path);
ValidatedConfig parse_config_json(const std::string& text);

}  // namespace hzp
