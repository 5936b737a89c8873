#include "sfnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

namespace sfnet {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

struct Eval {
  double loss;
  std::uint64_t signature;
};

Eval eval_loss(const LossFn& fn) {
  Tape<double> tape;
  tape.set_grad_enabled(false);
  tape.set_track_branches(true);
  const double loss = fn(tape).value()[0];
  return {loss, tape.branch_signature()};
}

}  // namespace

GradCheckReport grad_check(const std::vector<Parameter<double>*>& params, const LossFn& loss_fn,
                           const GradCheckOptions& opt) {
  for (Parameter<double>* p : params) p->zero_grad();
  std::uint64_t base_sig = 0;
  {
    Tape<double> tape;
    tape.set_track_branches(true);
    Var<double> loss = loss_fn(tape);
    base_sig = tape.branch_signature();
    tape.backward(loss);
  }
  GradCheckReport report;
  report.tolerance = opt.tolerance;
  std::mt19937_64 rng(opt.seed);
  for (Parameter<double>* p : params) {
    if (!p->trainable) continue;
    const std::size_t n = p->value.numel();
    // Candidate order: a seeded permutation; the first coords_per_tensor
    // differentiable ones are checked.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t want = std::min(n, opt.coords_per_tensor);
    if (n > want) std::shuffle(order.begin(), order.end(), rng);
    GradCheckEntry e;
    e.name = p->name;
    for (std::size_t next = 0; next < n && e.coords < want; ++next) {
      const std::size_t i = order[next];
      const double orig = p->value[i];
      p->value[i] = orig + opt.step;
      const Eval up = eval_loss(loss_fn);
      p->value[i] = orig - opt.step;
      const Eval down = eval_loss(loss_fn);
      p->value[i] = orig;
      if (up.signature != base_sig || down.signature != base_sig) {
        if (++e.kink_skips > opt.max_kink_skips) break;
        continue;
      }
      ++e.coords;
      const double numeric = (up.loss - down.loss) / (2 * opt.step);
      const double analytic = p->grad[i];
      const double err = relative_error(analytic, numeric, opt.floor);
      if (err >= e.max_rel_error) {
        e.max_rel_error = err;
        e.worst_index = i;
        e.analytic = analytic;
        e.numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, e.max_rel_error);
    report.kink_skips += e.kink_skips;
    // A tensor that could not supply enough smooth coordinates fails.
    if (e.coords < want) report.passed = false;
    report.entries.push_back(std::move(e));
  }
  report.passed = report.passed && report.max_rel_error < opt.tolerance;
  return report;
}

std::string GradCheckReport::table() const {
  std::size_t w = 9;
  for (const auto& e : entries) w = std::max(w, e.name.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(w)) << "parameter"
     << "  coords  kinks  max_rel_err  analytic  numeric\n";
  os << std::scientific << std::setprecision(3);
  for (const auto& e : entries) {
    os << std::left << std::setw(static_cast<int>(w)) << e.name << "  " << std::setw(6)
       << e.coords << "  " << std::setw(5) << e.kink_skips << "  " << e.max_rel_error << "  " << e.analytic << "  " << e.numeric
       << (e.max_rel_error < tolerance ? "" : "  FAIL") << '\n';
  }
  os << "kink skips " << kink_skips << ", max relative error " << max_rel_error << " (tolerance " << tolerance << ") "
     << (passed ? "PASS" : "FAIL") << '\n';
  return os.str();
}

nlohmann::json GradCheckReport::to_json() const {
  nlohmann::json ents = nlohmann::json::array();
  for (const auto& e : entries) {
    ents.push_back({{"name", e.name},
                    {"coords", e.coords},
                    {"kink_skips", e.kink_skips},
                    {"max_rel_error", e.max_rel_error},
                    {"worst_index", e.worst_index},
                    {"analytic", e.analytic},
                    {"numeric", e.numeric}});
  }
  return {{"entries", ents},
          {"max_rel_error", max_rel_error},
          {"kink_skips", kink_skips},
          {"tolerance", tolerance},
          {"passed", passed}};
}

}  // namespace sfnet
