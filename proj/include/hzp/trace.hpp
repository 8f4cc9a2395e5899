// SPDX-License-Identifier: Apache-2.0
//
// Timeline export: Chrome Trace Event JSON and the summary CSV.

#pragma once

#include <ostream>
#include <string>

#include "hzp/sched.hpp"

namespace hzp {

// Chrome Trace Event format: one complete ("X") event per task, one track per
// stream, plus a counter track for the dynamic-memory trace. Timestamps are
// microseconds.
void write_chrome_trace(std::ostream& os, const Timeline& timeline,
                        const std::string& process_name);

// Summary line: mode,makespan_s,compute_idle_s,peak_bytes,fragmentation.
void write_summary_csv_header(std::ostream& os);
void write_summary_csv_row(std::ostream& os, const Timeline& timeline,
                           const MemoryTraceResult& mem);

}  // namespace hzp
