#include "synomaly/diffusion.hpp"

#include <numbers>
#include <stdexcept>

namespace synomaly {

ScheduleKind parse_schedule_kind(std::string_view name)
{
  if (name == "linear") {
    return ScheduleKind::linear;
  }
  if (name == "cosine") {
    return ScheduleKind::cosine;
  }
  throw std::invalid_argument("unknown schedule kind: " + std::string(name));
}

std::string_view to_string(ScheduleKind k)
{
  return k == ScheduleKind::linear ? "linear" : "cosine";
}

double Schedule::sigma(int t) const
{
  if (t < 1 || t > T) {
    throw std::invalid_argument("sigma: step must lie in [1, T]");
  }
  double const a = (*this)[t];
  double const a_prev = (*this)[t - 1];
  return std::sqrt((1.0 - a_prev) / (1.0 - a)) * std::sqrt(1.0 - a / a_prev);
}

Schedule make_schedule(ScheduleKind kind, int T)
{
  if (T < 1) {
    throw std::invalid_argument("make_schedule: T must be >= 1");
  }
  Schedule s;
  s.kind = kind;
  s.T = T;
  s.alphabar.resize(static_cast<std::size_t>(T) + 1);
  s.alphabar[0] = 1.0;
  if (kind == ScheduleKind::linear) {
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) {
      double const frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
      double const beta = linear_beta_start + frac * (linear_beta_end - linear_beta_start);
      prod *= 1.0 - beta;
      s.alphabar[t] = prod;
    }
  } else if (kind == ScheduleKind::cosine) {
    auto f = [T](int t) {
      double const c = std::cos((static_cast<double>(t) / T + cosine_offset) / (1.0 + cosine_offset) *
                                std::numbers::pi / 2.0);
      return c * c;
    };
    double const f0 = f(0);
    for (int t = 1; t <= T; ++t) {
      s.alphabar[t] = f(t) / f0;
    }
  } else {
    throw std::invalid_argument("make_schedule: invalid kind");
  }
  for (int t = 1; t <= T; ++t) {
    s.alphabar[t] = std::max(s.alphabar[t], alphabar_floor);
  }
  return s;
}

std::vector<int> step_ladder(int t_start, int stride)
{
  if (stride < 1) {
    throw std::invalid_argument("step_ladder: stride must be >= 1");
  }
  std::vector<int> ladder;
  for (int t = t_start; t > 0; t -= stride) {
    ladder.push_back(t);
  }
  ladder.push_back(0);
  return ladder;
}

} // namespace synomaly
