#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace cellseg {

using WarningSink = std::function<void(std::string_view)>;

/// Report a non-fatal condition. Goes to stderr unless a sink is installed.
void warn(std::string_view message);

/// Installs `sink` for warnings and returns the previous one.
WarningSink set_warning_sink(WarningSink sink);

/// Collects warnings for the lifetime of the object and forwards them to a previously
/// installed sink, if any. Restores the old sink on exit.
class WarningCapture {
 public:
  WarningCapture();
  ~WarningCapture();
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;

  const std::vector<std::string>& messages() const { return messages_; }
  bool empty() const { return messages_.empty(); }

 private:
  std::vector<std::string> messages_;
  WarningSink previous_;
};

/// Sets the worker thread count used by parallel loops (0 = runtime default).
void set_thread_count(int threads);
int thread_count();

}  // namespace cellseg
