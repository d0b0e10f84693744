#include "cellseg/diagnostics.hpp"

#include <iostream>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cellseg {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

WarningSink& current_sink() {
  static WarningSink sink;
  return sink;
}

}  // namespace

void warn(std::string_view message) {
  std::lock_guard lock(sink_mutex());
  if (current_sink()) {
    current_sink()(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

WarningSink set_warning_sink(WarningSink sink) {
  std::lock_guard lock(sink_mutex());
  WarningSink old = std::move(current_sink());
  current_sink() = std::move(sink);
  return old;
}

WarningCapture::WarningCapture() {
  previous_ = set_warning_sink([this](std::string_view m) {
    messages_.emplace_back(m);
    if (previous_) previous_(m);
  });
}

WarningCapture::~WarningCapture() { set_warning_sink(std::move(previous_)); }

void set_thread_count(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace cellseg
