#include "neuropf/admittance.hpp"

#include <cmath>
#include <numbers>
#include <unordered_map>
#include <vector>

#include "neuropf/errors.hpp"

namespace neuropf {

AdmittanceMatrix build_ybus(const CaseData& data) {
  const auto n = static_cast<Eigen::Index>(data.bus_count());
  std::unordered_map<int, Eigen::Index> index;
  for (Eigen::Index i = 0; i < n; ++i) index.emplace(data.buses[i].id, i);
  auto lookup = [&](int id) {
    auto it = index.find(id);
    if (it == index.end()) throw ValidationError("branch references unknown bus " + std::to_string(id));
    return it->second;
  };

  std::vector<Eigen::Triplet<Complex>> triplets;
  triplets.reserve(4 * data.branches.size() + data.buses.size());
  for (const auto& br : data.branches) {
    if (!br.status) continue;
    const Eigen::Index f = lookup(br.from);
    const Eigen::Index t = lookup(br.to);
    const Complex ys = 1.0 / Complex(br.r, br.x);
    const Complex ych(0.0, br.b / 2.0);
    const double ratio = br.tap == 0.0 ? 1.0 : br.tap;
    const Complex tap = std::polar(ratio, br.shift * std::numbers::pi / 180.0);
    triplets.emplace_back(f, f, (ys + ych) / (ratio * ratio));
    triplets.emplace_back(t, t, ys + ych);
    triplets.emplace_back(f, t, -ys / std::conj(tap));
    triplets.emplace_back(t, f, -ys / tap);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const Bus& b = data.buses[i];
    // Always touch the diagonal so the pattern includes it.
    triplets.emplace_back(i, i, Complex(b.Gs, b.Bs) / data.base_MVA);
  }

  AdmittanceMatrix y;
  y.n = n;
  y.Y.resize(n, n);
  y.Y.setFromTriplets(triplets.begin(), triplets.end());
  y.Y.makeCompressed();
  y.Yt = y.Y.transpose();
  y.Yt.makeCompressed();
  y.G = y.Y.real();
  y.B = y.Y.imag();
  return y;
}

}  // namespace neuropf
