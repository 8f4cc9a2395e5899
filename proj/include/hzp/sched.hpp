// SPDX-License-Identifier: Apache-2.0
//
// Per-iteration task graph of compute and communication tasks, and the
// discrete-event simulation of vanilla vs. multi-stream asynchronous
// scheduling with memory and timeline accounting.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hzp/collective.hpp"
#include "hzp/config.hpp"
#include "hzp/memory.hpp"

namespace hzp {

enum class TaskKind {
  Fwd,
  Bwd,
  FwdRecompute,
  AgParam,
  RsGrad,
  ArDzp,
  OptStep,
  AgPostStep,
};

enum class Pass { Forward, Backward, None };

const char* to_string(TaskKind kind);

struct Task {
  int id = 0;
  TaskKind kind = TaskKind::Fwd;
  int layer = -1;
  int microbatch = -1;
  int virtual_stage = 0;
  Pass pass = Pass::None;
  double duration = 0.0;
  std::int64_t bytes = 0;    // payload, comm tasks only
  std::vector<int> deps;
};

// One entry of a per-rank pipeline schedule: a forward or backward pass of a
// microbatch on one of the rank's virtual stages.
struct ScheduleSlot {
  Pass pass = Pass::Forward;
  int microbatch = 0;
  int virtual_stage = 0;
};

class SchedError : public std::runtime_error {
 public:
  enum class Code { InvalidPolicy, DeadlockDetected };
  SchedError(Code code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

struct GraphPolicy {
  // Hold every reduce-scatter until the last backward task completes
  // (comparison mode for the memory study; the workflow default is immediate).
  bool defer_rs = false;
  // Pipeline rank whose local graph is built; layers are assigned by chunking
  // num_layers into pp*vpp contiguous chunks, rank r hosting chunks
  // v*pp + r for each virtual stage v.
  int rank = 0;
  // Execution order; empty means one F slot then one B slot per microbatch.
  std::vector<ScheduleSlot> order;
};

struct TaskGraph {
  std::vector<Task> tasks;
  ModelSpec spec;
  ParallelConfig cfg;
  int rank = 0;  // pipeline rank this graph belongs to
  std::int64_t ag_slot_bytes = 0;    // full per-layer BF16 parameter bytes
  std::int64_t grad_buf_bytes = 0;   // full per-layer FP32 gradient bytes
  double compute_flops_per_sec = 0.0;

  int count(TaskKind kind) const;
};

TaskGraph build_task_graph(const ModelSpec& spec, const ParallelConfig& cfg,
                           const CostModel& cost, const GraphPolicy& policy);

enum class SchedMode { Vanilla, Async };

enum class StreamId { Compute = 0, Ag = 1, Rs = 2 };

struct BufferPool {
  std::int64_t capacity = 0;  // bytes, reserved once per run
  int slot_count = 1;
  std::int64_t slot_bytes = 0;
};

struct PoolSet {
  BufferPool ag;  // prelaunch depth == ag.slot_count
  BufferPool rs;
};

PoolSet make_pools(const TaskGraph& graph, int prelaunch_depth, int rs_slots);

// floor(free_budget / per-layer full-parameter bytes), clamped to
// [1, num_layers].
int derive_prelaunch_depth(const TaskGraph& graph, std::int64_t free_budget);

struct TimelineEntry {
  int task_id = 0;
  TaskKind kind = TaskKind::Fwd;
  int layer = -1;
  int microbatch = -1;
  StreamId stream = StreamId::Compute;
  double start = 0.0;
  double end = 0.0;
  double buffer_release = 0.0;  // AG data: last consumer end (reuse-extended)
  double pool_release = 0.0;    // AG slots: first consumer end (ring reuse)
  std::int64_t bytes = 0;
};

struct Timeline {
  std::vector<TimelineEntry> entries;  // ascending task id
  std::vector<std::pair<double, std::int64_t>> memory_samples;
  std::int64_t peak_memory = 0;
  double compute_idle = 0.0;
  double compute_busy = 0.0;
  double makespan = 0.0;
  SchedMode mode = SchedMode::Async;
};

Timeline simulate(const TaskGraph& graph, const PoolSet& pools, SchedMode mode);

struct MemoryTraceResult {
  std::int64_t peak_bytes = 0;
  double fragmentation = 0.0;
  std::int64_t peak_grad_buffer_bytes = 0;
  std::vector<std::pair<double, std::int64_t>> samples;
};

MemoryTraceResult memory_trace(const Timeline& timeline,
                               const MemoryLedger& ledger,
                               const PoolSet& pools);

double utilization_report(const Timeline& timeline, const ModelSpec& spec,
                          double peak_flops);

}  // namespace hzp
