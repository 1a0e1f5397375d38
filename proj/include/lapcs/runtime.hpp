#pragma once

namespace lapcs {

// Sets intra-op parallelism. LAPCS_THREADS caps the worker count;
// deterministic mode forces a single thread so results are bitwise stable.
void configure_threads(bool deterministic);
int intra_op_threads();

}  // namespace lapcs
