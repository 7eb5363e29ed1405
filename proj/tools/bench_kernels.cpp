// Compares the serial and OpenMP variants of the two hot kernels (candidate
// scanning inside the forward pass, mini-batch gradient accumulation) and
// checks that both variants produce bit-identical results.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "marsnet/convert.hpp"
#include "marsnet/data.hpp"
#include "marsnet/mars.hpp"
#include "marsnet/network.hpp"
#include "marsnet/parallel.hpp"
#include "marsnet/rng.hpp"
#include "marsnet/synthetic.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using namespace marsnet;
using Clock = std::chrono::steady_clock;

double time_best_of(int repeats, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = Clock::now();
    fn();
    const auto t1 = Clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

bool same_trail(const std::vector<CandidateModel>& a, const std::vector<CandidateModel>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].record.gcv != b[i].record.gcv) return false;
    if (a[i].record.rss != b[i].record.rss) return false;
    const auto& ta = a[i].model.terms;
    const auto& tb = b[i].model.terms;
    if (ta.size() != tb.size()) return false;
    for (std::size_t j = 0; j < ta.size(); ++j) {
      if (ta[j].coefficient != tb[j].coefficient) return false;
      if (ta[j].basis.dimension != tb[j].basis.dimension) return false;
      if (ta[j].basis.knot != tb[j].basis.knot) return false;
      if (ta[j].basis.direction != tb[j].basis.direction) return false;
    }
  }
  return true;
}

bool same_gradient(const NetworkGradient& a, const NetworkGradient& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    if ((a.layers[l].weights.array() != b.layers[l].weights.array()).any()) return false;
    if ((a.layers[l].bias.array() != b.layers[l].bias.array()).any()) return false;
  }
  return true;
}

void print_row(const std::string& name, double serial, double parallel, bool identical) {
  std::printf("%-24s %12.4f ms %12.4f ms %8.2fx   %s\n", name.c_str(), serial * 1e3,
              parallel * 1e3, parallel > 0 ? serial / parallel : 0.0,
              identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs OpenMP kernel benchmark"};
  int threads =
#ifdef _OPENMP
      omp_get_max_threads();
#else
      1;
#endif
  Eigen::Index rows = 2000;
  int repeats = 3;
  app.add_option("--threads", threads, "thread count for the parallel variant");
  app.add_option("--rows", rows, "sample count for the benchmark dataset");
  app.add_option("--repeats", repeats, "repetitions per measurement (fastest wins)");
  CLI11_PARSE(app, argc, argv);

  if (!openmp_enabled())
    std::printf("note: built without OpenMP; the parallel variant runs serially\n");
  std::printf("threads=%d rows=%lld repeats=%d\n\n", threads, static_cast<long long>(rows),
              repeats);

  RawTable table = synth_abalone_like();
  table = encode_categorical(table, "sex");
  Dataset data = to_dataset(table, "rings");
  data = normalize(data).first;
  if (rows < data.n()) {
    data.features.conservativeResize(rows, Eigen::NoChange);
    data.targets.conservativeResize(rows);
  }

  std::printf("%-24s %15s %15s %9s\n", "kernel", "serial", "parallel", "speedup");

  FitConfig full_config;
  full_config.max_basis = 16;
  full_config.knot_subsample = 32;
  std::vector<CandidateModel> trail_serial, trail_parallel;
  {
    set_max_threads(1);
    const double s = time_best_of(repeats, [&] { trail_serial = forward_pass(data, full_config); });
    set_max_threads(threads);
    const double p =
        time_best_of(repeats, [&] { trail_parallel = forward_pass(data, full_config); });
    print_row("candidate scan (full)", s, p, same_trail(trail_serial, trail_parallel));
  }

  FitConfig fast_config = full_config;
  fast_config.fast_update = true;
  {
    set_max_threads(1);
    const double s = time_best_of(repeats, [&] { trail_serial = forward_pass(data, fast_config); });
    set_max_threads(threads);
    const double p =
        time_best_of(repeats, [&] { trail_parallel = forward_pass(data, fast_config); });
    print_row("candidate scan (fast)", s, p, same_trail(trail_serial, trail_parallel));
  }

  {
    const MarsModel model = backward_prune(trail_serial, data, fast_config);
    DenseNetwork net = mars_to_network(model).network;
    net = reshape_to(net, {net.input_dim(), 64, 64, net.output_dim()}, 0.01, 7);
    const Eigen::MatrixXd targets = data.targets;
    NetworkGradient g_serial, g_parallel;
    set_max_threads(1);
    const double s =
        time_best_of(repeats, [&] { g_serial = gradients(net, data.features, targets); });
    set_max_threads(threads);
    const double p =
        time_best_of(repeats, [&] { g_parallel = gradients(net, data.features, targets); });
    print_row("batch gradients", s, p, same_gradient(g_serial, g_parallel));

    Eigen::MatrixXd out_serial, out_parallel;
    set_max_threads(1);
    const double fs = time_best_of(repeats, [&] { out_serial = forward(net, data.features); });
    set_max_threads(threads);
    const double fp = time_best_of(repeats, [&] { out_parallel = forward(net, data.features); });
    print_row("batch forward", fs, fp,
              (out_serial.array() == out_parallel.array()).all());
  }

  set_max_threads(1);
  return 0;
}
