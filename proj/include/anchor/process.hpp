#pragma once

#include <sys/types.h>

#include <chrono>
#include <optional>
#include <string>
#include <vector>

namespace anchor {

/// Owned child process. Destruction SIGKILLs and reaps a still-running child.
class ChildProcess {
 public:
  /// argv[0] is the executable path. Output goes to log_path when given
  /// (stdout and stderr, appended), else is inherited.
  static ChildProcess spawn(const std::vector<std::string>& argv, const std::string& log_path = {});

  ChildProcess() = default;
  ChildProcess(ChildProcess&& o) noexcept;
  ChildProcess& operator=(ChildProcess&& o) noexcept;
  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;
  ~ChildProcess();

  pid_t pid() const noexcept { return pid_; }
  bool valid() const noexcept { return pid_ > 0; }

  /// Exit status (or 128+signal) if the child has exited.
  std::optional<int> try_wait();
  int wait();
  std::optional<int> wait_for(std::chrono::milliseconds timeout);
  void signal(int sig) const noexcept;
  /// SIGTERM, wait up to grace, then SIGKILL. Returns the exit status.
  int terminate(std::chrono::milliseconds grace = std::chrono::milliseconds(2000));
  /// SIGKILL without grace; returns the exit status.
  int kill();

 private:
  explicit ChildProcess(pid_t pid) : pid_(pid) {}
  pid_t pid_ = -1;
  std::optional<int> status_;
};

/// Absolute path of the running executable.
std::string self_exe_path();

}  // namespace anchor
