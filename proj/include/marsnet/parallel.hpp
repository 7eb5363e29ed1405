#pragma once

namespace marsnet {

// Thread cap for the OpenMP kernels. Defaults to 1: the experiment harness
// times single-threaded runs, and every kernel is required to produce
// bit-identical results at any thread count, so parallelism is strictly
// opt-in.
int max_threads();
void set_max_threads(int n);
bool openmp_enabled();

}  // namespace marsnet
