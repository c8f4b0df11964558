#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "anchor/demo/audit.hpp"
#include "anchor/demo/project_config.hpp"

namespace anchor::demo {

/// Removes and recreates run_dir, its logs/ directory and the region file.
void prepare_run_dir(const DemoConfig& cfg);

struct RunOutcome {
  int exit_code = 0;  // 0 ok, 3 runtime failure, 4 audit mismatch
  std::map<std::string, int> role_status;
  AuditReport audit;
  std::string error;
};

/// Runs broker and all four roles as child processes of exe (an anchorctl
/// binary), waits for inference to finish `cycles` cycles, stops the rest and
/// audits the run directory.
RunOutcome run_demo(const DemoConfig& cfg, const std::string& config_path, std::uint64_t cycles,
                    const std::string& exe);

}  // namespace anchor::demo
