// SPDX-License-Identifier: Apache-2.0

#include "hzp/trace.hpp"

#include <cinttypes>
#include <cstdio>

#include <nlohmann/json.hpp>

namespace hzp {

namespace {

using nlohmann::json;

const char* stream_name(StreamId stream) {
  switch (stream) {
    case StreamId::Compute: return "compute";
    case StreamId::Ag: return "all-gather";
    case StreamId::Rs: return "reduce-scatter";
  }
  return "?";
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void write_chrome_trace(std::ostream& os, const Timeline& timeline,
                        const std::string& process_name) {
  json events = json::array();
  events.push_back({{"name", "process_name"},
                    {"ph", "M"},
                    {"pid", 1},
                    {"tid", 0},
                    {"args", {{"name", process_name}}}});
  for (int tid = 0; tid < 3; ++tid) {
    events.push_back({{"name", "thread_name"},
                      {"ph", "M"},
                      {"pid", 1},
                      {"tid", tid},
                      {"args", {{"name", stream_name(static_cast<StreamId>(tid))}}}});
  }
  for (const auto& e : timeline.entries) {
    json args{{"task_id", e.task_id}};
    if (e.layer >= 0) args["layer"] = e.layer;
    if (e.microbatch >= 0) args["microbatch"] = e.microbatch;
    if (e.bytes > 0) args["bytes"] = e.bytes;
    events.push_back({{"name", to_string(e.kind)},
                      {"cat", "task"},
                      {"ph", "X"},
                      {"pid", 1},
                      {"tid", static_cast<int>(e.stream)},
                      {"ts", e.start * 1e6},
                      {"dur", (e.end - e.start) * 1e6},
                      {"args", args}});
  }
  for (const auto& [time, bytes] : timeline.memory_samples) {
    events.push_back({{"name", "dynamic_bytes"},
                      {"cat", "memory"},
                      {"ph", "C"},
                      {"pid", 1},
                      {"tid", 0},
                      {"ts", time * 1e6},
                      {"args", {{"bytes", bytes}}}});
  }
  json root{{"traceEvents", events}, {"displayTimeUnit", "ms"}};
  os << root.dump(2) << "\n";
}

void write_summary_csv_header(std::ostream& os) {
  os << "mode,makespan_s,compute_idle_s,peak_bytes,fragmentation\n";
}

void write_summary_csv_row(std::ostream& os, const Timeline& timeline,
                           const MemoryTraceResult& mem) {
  os << (timeline.mode == SchedMode::Vanilla ? "vanilla" : "async") << ","
     << format_double(timeline.makespan) << ","
     << format_double(timeline.compute_idle) << "," << mem.peak_bytes << ","
     << format_double(mem.fragmentation) << "\n";
}

}  // namespace hzp
