// SPDX-License-Identifier: Apache-2.0
//
// 1F1B and interleaved-1F1B schedule generation, the parameter/gradient
// communication reuse rules, and the recomputation rule.

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "hzp/sched.hpp"

namespace hzp {

enum class PipeVariant { OneFOneB, Interleaved };
enum class Phase { Warmup, Steady, Cooldown };

class PipeError : public std::runtime_error {
 public:
  enum class Code { UnsupportedVariant, ScheduleGraphMismatch, BadShape };
  PipeError(Code code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

struct PipeSchedule {
  int pp = 1;
  int vpp = 1;
  int microbatches = 1;
  PipeVariant variant = PipeVariant::OneFOneB;
  std::vector<std::vector<ScheduleSlot>> per_rank;
  std::vector<std::vector<Phase>> phases;  // parallel to per_rank
};

PipeVariant parse_variant(const std::string& name);  // "1f1b" | "interleaved"

PipeSchedule build_schedule(int pp, int vpp, int microbatches,
                            PipeVariant variant);

struct ReuseReport {
  int r1_eliminated_ag = 0;  // adjacent like-pass reuse, AG tasks removed
  int r3_eliminated_ag = 0;  // steady-state F-B-F reuse, AG tasks removed
  int r2_merged_rs = 0;      // cooldown RS tasks merged away
  std::int64_t extra_cached_bytes = 0;

  int eliminated_ag() const { return r1_eliminated_ag + r3_eliminated_ag; }
};

// Applies the reuse rules to a task graph built for this schedule (the
// graph's pipeline rank selects the slot list). Eliminated all-gathers become
// dependency edges onto the retained all-gather; merged reduce-scatters keep
// the last task of each run with accumulated inputs.
ReuseReport apply_reuse(const PipeSchedule& schedule, TaskGraph& graph);

// With recompute enabled, inserts a forward-recompute task before every
// backward task (same duration as the forward) without adding any all-gather:
// the backward all-gather feeds both.
void recompute_rule(TaskGraph& graph, bool recompute);

}  // namespace hzp
