#include "lapcs/runtime.hpp"

#include <Eigen/Core>
#include <cstdlib>
#include <string>
#include <thread>

namespace lapcs {

void configure_threads(bool deterministic) {
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("LAPCS_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap > 0) threads = std::min(threads, cap);
    } catch (const std::exception&) {
      // Unparseable values leave the default in place.
    }
  }
  if (deterministic) threads = 1;
  Eigen::setNbThreads(threads);
}

int intra_op_threads() { return Eigen::nbThreads(); }

}  // namespace lapcs
