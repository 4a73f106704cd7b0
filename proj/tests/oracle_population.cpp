#include "oracle_population.hpp"

#include <cmath>
#include <stdexcept>

namespace oracle {

Population::Population(const PopulationSpec& sp) {
  for (int x = 0; x < 2; ++x)
    for (int d2 = 0; d2 < 2; ++d2)
      for (int d1 = 0; d1 < 2; ++d1)
        for (int sign : {-1, 1}) {
          const int p = path_index(d1, d2);
          const double dy = sp.m[x][p] + sign * sp.e[x][p];
          const double pd2 = d2 ? sp.p2[x] : 1.0 - sp.p2[x];
          const double pd1 = d1 ? sp.p1[x][d2] : 1.0 - sp.p1[x][d2];
          const double q = sp.q_dy ? sp.q_dy(x, d2, dy) : sp.q[x][d2];
          for (int s = 0; s < 2; ++s) {
            const double mass = sp.px[x] * pd2 * pd1 * 0.5 * (s ? q : 1.0 - q);
            const double c = mass * static_cast<double>(sp.scale);
            const long n = std::lround(c);
            if (std::abs(c - static_cast<double>(n)) > 1e-9)
              throw std::logic_error("population mass is not integral at this scale");
            if (n == 0) continue;
            atoms_.push_back({x, d1, d2, s, dy, n});
            total_ += n;
          }
        }
}

PanelSample Population::sample(bool with_y2) const {
  std::vector<pdatt::ObservationRecord> recs;
  recs.reserve(static_cast<std::size_t>(total_));
  for (const auto& a : atoms_)
    for (long r = 0; r < a.count; ++r) {
      pdatt::ObservationRecord o;
      o.delta_y = a.dy;
      o.s = a.s;
      if (a.s) o.d1 = a.d1;
      o.d2 = a.d2;
      o.x = {1.0, static_cast<double>(a.x)};
      if (with_y2) o.y2 = a.dy;
      recs.push_back(std::move(o));
    }
  return PanelSample::from_records(recs, {"(intercept)", "x"});
}

double Population::mass(const std::function<bool(const Atom&)>& pred) const {
  long c = 0;
  for (const auto& a : atoms_)
    if (pred(a)) c += a.count;
  return static_cast<double>(c) / static_cast<double>(total_);
}

double Population::cond_mean(TreatmentPath d, int x) const {
  double num = 0.0;
  long den = 0;
  for (const auto& a : atoms_)
    if (a.x == x && a.d1 == d.d1 && a.d2 == d.d2) {
      num += a.dy * static_cast<double>(a.count);
      den += a.count;
    }
  return num / static_cast<double>(den);
}

double Population::p_x_given(TreatmentPath d, int x) const {
  const double joint = mass([&](const Atom& a) { return a.x == x && a.d1 == d.d1 && a.d2 == d.d2; });
  return joint / mass([&](const Atom& a) { return a.d1 == d.d1 && a.d2 == d.d2; });
}

double Population::p_x_given_d2(int d2, int x) const {
  return mass([&](const Atom& a) { return a.x == x && a.d2 == d2; }) /
         mass([&](const Atom& a) { return a.d2 == d2; });
}

double Population::p_d1_given_d2(int d1, int d2) const {
  return mass([&](const Atom& a) { return a.d1 == d1 && a.d2 == d2; }) /
         mass([&](const Atom& a) { return a.d2 == d2; });
}

double Population::p_d1_given_d2_x(int d1, int d2, int x) const {
  return mass([&](const Atom& a) { return a.d1 == d1 && a.d2 == d2 && a.x == x; }) /
         mass([&](const Atom& a) { return a.d2 == d2 && a.x == x; });
}

double Population::tau(TreatmentPath d) const {
  double t = 0.0;
  for (int x = 0; x < 2; ++x) t += p_x_given(d, x) * (cond_mean(d, x) - cond_mean({0, 0}, x));
  return t;
}

PopulationSpec random_spec(std::mt19937_64& rng, bool d2_independent_of_x) {
  std::uniform_int_distribution<int> quarter(1, 3), half(-4, 4), spread(1, 2);
  auto q4 = [&] { return quarter(rng) / 4.0; };
  PopulationSpec sp;
  const double px0 = q4();
  sp.px = {px0, 1.0 - px0};
  const double p2 = q4();
  for (int x = 0; x < 2; ++x) {
    sp.p2[x] = d2_independent_of_x ? p2 : q4();
    for (int d2 = 0; d2 < 2; ++d2) {
      sp.p1[x][d2] = q4();
      sp.q[x][d2] = q4();
    }
    for (int p = 0; p < 4; ++p) {
      sp.m[x][p] = half(rng) / 2.0;
      sp.e[x][p] = spread(rng) / 2.0;
    }
  }
  return sp;
}

PopulationSpec reference_spec() {
  PopulationSpec sp;
  sp.px = {0.5, 0.5};
  sp.p2 = {0.25, 0.75};
  sp.p1[0] = {0.25, 0.5};
  sp.p1[1] = {0.5, 0.75};
  sp.q[0] = {0.75, 0.25};
  sp.q[1] = {0.25, 0.75};
  // paths indexed 00, 01, 10, 11
  sp.m[0] = {0.0, 1.0, 0.5, 2.0};
  sp.m[1] = {1.0, 1.0, 3.0, 4.5};
  sp.e[0] = {1.0, 0.5, 1.0, 0.5};
  sp.e[1] = {0.5, 1.0, 0.5, 1.0};
  return sp;
}

}  // namespace oracle
