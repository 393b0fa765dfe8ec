#include "riwm/wmsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace riwm {

namespace {

constexpr double kAmpPrune = 1e-15;
constexpr double kCoverageTol = 1e-4;

// standard normal CDF
double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double gaussian_overlap(double da, double db, double sigma) {
  const double d = da - db;
  return std::exp(-d * d / (8.0 * sigma * sigma));
}

int coupling_bit(Party party, int stage) {
  return (party == Party::A ? 0 : 2) + (stage - 1);
}

int coupling_axis(Party party, int stage) {
  return (party == Party::A ? 0 : 2) + (stage - 1);
}

// deterministic, platform-stable RNG for sampling
struct SplitMix64 {
  std::uint64_t state;
  explicit SplitMix64(std::uint64_t seed) : state(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  std::uint64_t below(std::uint64_t n) { return next() % n; }
};

}  // namespace

void PixelGrid::validate() const {
  if (n_pixels < 2) throw std::invalid_argument("PixelGrid: n_pixels must be >= 2");
  if (pitch <= 0.0) throw std::invalid_argument("PixelGrid: pitch must be positive");
}

double BranchState::norm_squared() const {
  double n = 0.0;
  for (const auto& b : branches) n += std::norm(b.amp);
  return n;
}

Eigen::Vector4cd BranchState::polarization_vector(const Branch& b) const {
  return tensor_product(frame_a.col(b.pol_a), frame_b.col(b.pol_b));
}

BranchState product_branch_state(int pol_a, int pol_b, double sigma) {
  if ((pol_a != 0 && pol_a != 1) || (pol_b != 0 && pol_b != 1))
    throw std::invalid_argument("product_branch_state: basis index must be 0 or 1");
  BranchState s;
  s.sigma = sigma;
  s.branches.push_back({Complex(1.0, 0.0), pol_a, pol_b, Eigen::Vector4d::Zero()});
  return s;
}

BranchState bell_branch_state(int which, double sigma) {
  BranchState s;
  s.sigma = sigma;
  const double r = 1.0 / std::sqrt(2.0);
  switch (which) {
    case 0:  // psi- = (HV - VH)/sqrt(2)
      s.branches = {{Complex(r), 0, 1, {}}, {Complex(-r), 1, 0, {}}};
      break;
    case 1:  // psi+
      s.branches = {{Complex(r), 0, 1, {}}, {Complex(r), 1, 0, {}}};
      break;
    case 2:  // phi+
      s.branches = {{Complex(r), 0, 0, {}}, {Complex(r), 1, 1, {}}};
      break;
    case 3:  // phi-
      s.branches = {{Complex(r), 0, 0, {}}, {Complex(-r), 1, 1, {}}};
      break;
    default:
      throw std::invalid_argument("bell_branch_state: index must be 0..3");
  }
  for (auto& b : s.branches) b.shift = Eigen::Vector4d::Zero();
  return s;
}

std::vector<WeightedBranchState> initial_state(double visibility, double sigma) {
  if (visibility < 0.0 || visibility > 1.0)
    throw std::invalid_argument("initial_state: visibility outside [0, 1]");
  std::vector<WeightedBranchState> out;
  const double w_singlet = (1.0 + 3.0 * visibility) / 4.0;
  const double w_other = (1.0 - visibility) / 4.0;
  out.push_back({w_singlet, bell_branch_state(0, sigma)});
  if (w_other > 0.0)
    for (int k = 1; k < 4; ++k) out.push_back({w_other, bell_branch_state(k, sigma)});
  return out;
}

BranchState apply_weak_coupling(const BranchState& state, Party party, int stage,
                                double theta, double g) {
  if (stage != 1 && stage != 2) throw std::invalid_argument("apply_weak_coupling: stage must be 1 or 2");
  if (g < 0.0) throw std::invalid_argument("apply_weak_coupling: g must be >= 0");
  const unsigned bit = 1u << coupling_bit(party, stage);
  if (state.applied_mask & bit)
    throw std::logic_error("apply_weak_coupling: coupling already applied for this (party, stage)");

  // eigenframe of Pi(theta): +1 eigenvector (cos t, sin t), 0 eigenvector (-sin t, cos t)
  Eigen::Vector2cd eplus, eminus;
  eplus << std::cos(theta), std::sin(theta);
  eminus << -std::sin(theta), std::cos(theta);

  const int axis = coupling_axis(party, stage);
  BranchState out;
  out.sigma = state.sigma;
  out.applied_mask = state.applied_mask | bit;
  out.frame_a = state.frame_a;
  out.frame_b = state.frame_b;
  Matrix2 newframe;
  newframe.col(0) = eplus;
  newframe.col(1) = eminus;
  if (party == Party::A)
    out.frame_a = newframe;
  else
    out.frame_b = newframe;

  for (const auto& b : state.branches) {
    const Eigen::Vector2cd v =
        (party == Party::A ? state.frame_a.col(b.pol_a) : state.frame_b.col(b.pol_b));
    const Complex cp = eplus.adjoint() * v;
    const Complex cm = eminus.adjoint() * v;
    if (std::abs(cp) > kAmpPrune) {
      Branch nb = b;
      nb.amp = b.amp * cp;
      (party == Party::A ? nb.pol_a : nb.pol_b) = 0;
      nb.shift(axis) += g;
      out.branches.push_back(nb);
    }
    if (std::abs(cm) > kAmpPrune) {
      Branch nb = b;
      nb.amp = b.amp * cm;
      (party == Party::A ? nb.pol_a : nb.pol_b) = 1;
      out.branches.push_back(nb);
    }
  }
  return out;
}

std::vector<WeightedBranchState> inject_hwp_shift(std::vector<WeightedBranchState> components,
                                                  const Eigen::Vector4d& shifts) {
  for (auto& c : components)
    for (auto& b : c.state.branches) b.shift += shifts;
  return components;
}

double ProbabilityTensor::sum() const {
  double s = 0.0;
  for (double v : p) s += v;
  return s;
}

double ProbabilityTensor::moment1(int axis) const {
  const int n = grid.n_pixels;
  std::vector<double> marg(n, 0.0);
  const std::size_t strides[4] = {static_cast<std::size_t>(n) * n * n,
                                  static_cast<std::size_t>(n) * n,
                                  static_cast<std::size_t>(n), 1};
  for (std::size_t i = 0; i < p.size(); ++i)
    marg[(i / strides[axis]) % n] += p[i];
  double m = 0.0, tot = 0.0;
  for (int i = 0; i < n; ++i) {
    m += marg[i] * grid.bin_center(i);
    tot += marg[i];
  }
  return m / tot;
}

ProbabilityTensor pixel_distribution(const std::vector<WeightedBranchState>& components,
                                     const PixelGrid& grid) {
  grid.validate();
  ProbabilityTensor out;
  out.grid = grid;
  out.p.assign(grid.cells(), 0.0);
  const int n = grid.n_pixels;
  const double center = grid.center();

  for (const auto& comp : components) {
    const BranchState& st = comp.state;
    const double sigma = st.sigma;
    if (center - grid.origin < 4.0 * sigma || grid.origin + grid.span() - center < 4.0 * sigma)
      throw std::runtime_error("pixel_distribution: grid does not span 4 sigma around the beam center");

    const std::size_t nb = st.branches.size();
    // per-axis bin integral of the product of two displaced Gaussian
    // amplitudes, cached by displacement pair
    std::map<std::pair<double, double>, std::vector<double>> cache;
    auto bin_integrals = [&](double da, double db) -> const std::vector<double>& {
      auto key = std::minmax(da, db);
      auto it = cache.find(key);
      if (it != cache.end()) return it->second;
      std::vector<double> v(n);
      const double ov = gaussian_overlap(da, db, sigma);
      const double m = 0.5 * (da + db);
      double lo = normal_cdf((grid.edge(0) - m) / sigma);
      for (int i = 0; i < n; ++i) {
        const double hi = normal_cdf((grid.edge(i + 1) - m) / sigma);
        v[i] = ov * (hi - lo);
        lo = hi;
      }
      return cache.emplace(key, std::move(v)).first->second;
    };

    for (std::size_t k = 0; k < nb; ++k) {
      for (std::size_t l = 0; l < nb; ++l) {
        const Branch& bk = st.branches[k];
        const Branch& bl = st.branches[l];
        if (bk.pol_a != bl.pol_a || bk.pol_b != bl.pol_b) continue;
        const double w = comp.weight * (bk.amp * std::conj(bl.amp)).real();
        if (std::abs(w) < 1e-18) continue;
        const std::vector<double>* axis_v[4];
        for (int c = 0; c < 4; ++c)
          axis_v[c] = &bin_integrals(center + bk.shift(c), center + bl.shift(c));
        for (int a = 0; a < n; ++a) {
          const double wa = w * (*axis_v[0])[a];
          for (int b = 0; b < n; ++b) {
            const double wab = wa * (*axis_v[1])[b];
            if (std::abs(wab) < 1e-20) continue;
            for (int c = 0; c < n; ++c) {
              const double wabc = wab * (*axis_v[2])[c];
              double* row = &out.p[grid.index(a, b, c, 0)];
              const double* vd = axis_v[3]->data();
              for (int d = 0; d < n; ++d) row[d] += wabc * vd[d];
            }
          }
        }
      }
    }
  }

  for (double& v : out.p)
    if (v < 0.0) v = 0.0;  // interference residue at the -1e-12 level
  out.truncated_mass = 1.0 - out.sum();
  if (out.truncated_mass > kCoverageTol)
    throw std::runtime_error("pixel_distribution: truncated probability mass above 1e-4");
  return out;
}

CoincidenceTensor sample_coincidences(const ProbabilityTensor& probs,
                                      std::int64_t n_events, std::uint64_t seed) {
  if (n_events < 0) throw std::invalid_argument("sample_coincidences: n_events must be >= 0");
  CoincidenceTensor out;
  out.grid = probs.grid;
  out.counts.assign(probs.p.size(), 0);
  out.total = n_events;
  if (n_events == 0) return out;

  // compress support and renormalize out the truncation mass
  std::vector<std::size_t> cells;
  std::vector<double> w;
  double tot = 0.0;
  for (std::size_t i = 0; i < probs.p.size(); ++i)
    if (probs.p[i] > 0.0) {
      cells.push_back(i);
      w.push_back(probs.p[i]);
      tot += probs.p[i];
    }
  if (cells.empty()) throw std::invalid_argument("sample_coincidences: empty distribution");
  const std::size_t m = cells.size();

  // Vose alias table
  std::vector<double> prob(m);
  std::vector<std::size_t> alias(m);
  std::vector<std::size_t> small, large;
  std::vector<double> scaled(m);
  for (std::size_t i = 0; i < m; ++i) {
    scaled[i] = w[i] / tot * static_cast<double>(m);
    (scaled[i] < 1.0 ? small : large).push_back(i);
  }
  while (!small.empty() && !large.empty()) {
    const std::size_t s = small.back(); small.pop_back();
    const std::size_t g = large.back(); large.pop_back();
    prob[s] = scaled[s];
    alias[s] = g;
    scaled[g] = (scaled[g] + scaled[s]) - 1.0;
    (scaled[g] < 1.0 ? small : large).push_back(g);
  }
  for (std::size_t s : small) { prob[s] = 1.0; alias[s] = s; }
  for (std::size_t g : large) { prob[g] = 1.0; alias[g] = g; }

  SplitMix64 rng(seed);
  for (std::int64_t e = 0; e < n_events; ++e) {
    const std::size_t i = static_cast<std::size_t>(rng.below(m));
    const std::size_t cell = (rng.uniform() < prob[i]) ? i : alias[i];
    ++out.counts[cells[cell]];
  }
  return out;
}

std::vector<CoincidenceTensor> split_subsets(const CoincidenceTensor& tensor, int k,
                                             std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("split_subsets: k must be >= 1");
  std::vector<CoincidenceTensor> out(k);
  for (auto& t : out) {
    t.grid = tensor.grid;
    t.counts.assign(tensor.counts.size(), 0);
    t.total = 0;
  }
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < tensor.counts.size(); ++i) {
    for (std::int64_t e = 0; e < tensor.counts[i]; ++e) {
      const int s = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
      ++out[s].counts[i];
      ++out[s].total;
    }
  }
  return out;
}

ReducedState reduced_polarization_state(const std::vector<WeightedBranchState>& components) {
  Matrix4 rho = Matrix4::Zero();
  for (const auto& comp : components) {
    const BranchState& st = comp.state;
    for (const auto& bk : st.branches) {
      const Eigen::Vector4cd vk = st.polarization_vector(bk);
      for (const auto& bl : st.branches) {
        double ov = 1.0;
        for (int c = 0; c < 4; ++c) ov *= gaussian_overlap(bk.shift(c), bl.shift(c), st.sigma);
        const Eigen::Vector4cd vl = st.polarization_vector(bl);
        rho += comp.weight * ov * (bk.amp * std::conj(bl.amp)) * (vk * vl.adjoint());
      }
    }
  }
  PolarizationState ps{rho, std::numeric_limits<double>::quiet_NaN()};
  return {ps, ps.purity()};
}

namespace {
// product over coordinates of displaced-Gaussian expectation factors; power =
// number of times the coordinate is selected in the moment (0, 1 or 2)
double pair_moment_factor(const Branch& bk, const Branch& bl, double sigma,
                          const int powers[4]) {
  double f = 1.0;
  for (int c = 0; c < 4; ++c) {
    const double ov = gaussian_overlap(bk.shift(c), bl.shift(c), sigma);
    const double m = 0.5 * (bk.shift(c) + bl.shift(c));
    switch (powers[c]) {
      case 0: f *= ov; break;
      case 1: f *= ov * m; break;
      case 2: f *= ov * (sigma * sigma + m * m); break;
    }
  }
  return f;
}

double pointer_moment(const std::vector<WeightedBranchState>& components,
                      const int powers[4]) {
  double out = 0.0;
  for (const auto& comp : components) {
    const BranchState& st = comp.state;
    for (const auto& bk : st.branches)
      for (const auto& bl : st.branches) {
        if (bk.pol_a != bl.pol_a || bk.pol_b != bl.pol_b) continue;
        const double w = comp.weight * (bk.amp * std::conj(bl.amp)).real();
        if (std::abs(w) < 1e-18) continue;
        out += w * pair_moment_factor(bk, bl, st.sigma, powers);
      }
  }
  return out;
}
}  // namespace

double pointer_moment1(const std::vector<WeightedBranchState>& components, int axis) {
  int powers[4] = {0, 0, 0, 0};
  powers[axis] = 1;
  return pointer_moment(components, powers);
}

double pointer_moment2(const std::vector<WeightedBranchState>& components, int axis_a,
                       int axis_b) {
  int powers[4] = {0, 0, 0, 0};
  powers[axis_a] += 1;
  powers[axis_b] += 1;
  return pointer_moment(components, powers);
}

std::vector<WeightedBranchState> apply_protocol_couplings(
    std::vector<WeightedBranchState> components, const MeasurementSettings& s) {
  for (auto& c : components) {
    c.state = apply_weak_coupling(c.state, Party::A, 1, s.alpha1, s.coupling(Party::A, 1));
    c.state = apply_weak_coupling(c.state, Party::A, 2, s.alpha2, s.coupling(Party::A, 2));
    c.state = apply_weak_coupling(c.state, Party::B, 1, s.beta1, s.coupling(Party::B, 1));
    c.state = apply_weak_coupling(c.state, Party::B, 2, s.beta2, s.coupling(Party::B, 2));
  }
  return components;
}

// --- serialization -----------------------------------------------------------
// Text table: header key/value lines, then one "xA yA xB yB count" row per
// nonzero cell between "data" and "end".

void CoincidenceTensor::save(std::ostream& os) const {
  char buf[64];
  os << "# riwm coincidence tensor v1\n";
  os << "n_pixels " << grid.n_pixels << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", grid.pitch);
  os << "pitch " << buf << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", grid.origin);
  os << "origin " << buf << "\n";
  os << "total " << total << "\n";
  for (const auto& [k, v] : meta) os << "meta " << k << " " << v << "\n";
  os << "data\n";
  const int n = grid.n_pixels;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) {
          const std::int64_t cnt = counts[grid.index(a, b, c, d)];
          if (cnt != 0) os << a << " " << b << " " << c << " " << d << " " << cnt << "\n";
        }
  os << "end\n";
}

void CoincidenceTensor::save_file(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("CoincidenceTensor: cannot open " + path + " for writing");
  save(os);
}

CoincidenceTensor CoincidenceTensor::load(std::istream& is) {
  CoincidenceTensor t;
  std::string line;
  bool in_data = false;
  bool have_n = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    if (!in_data) {
      std::string key;
      ls >> key;
      if (key == "n_pixels") { ls >> t.grid.n_pixels; have_n = true; }
      else if (key == "pitch") ls >> t.grid.pitch;
      else if (key == "origin") ls >> t.grid.origin;
      else if (key == "total") ls >> t.total;
      else if (key == "meta") {
        std::string k; ls >> k;
        std::string v; std::getline(ls, v);
        if (!v.empty() && v.front() == ' ') v.erase(0, 1);
        t.meta[k] = v;
      } else if (key == "data") {
        if (!have_n) throw std::runtime_error("CoincidenceTensor: data before n_pixels");
        t.grid.validate();
        t.counts.assign(t.grid.cells(), 0);
        in_data = true;
      } else {
        throw std::runtime_error("CoincidenceTensor: unknown header key '" + key + "'");
      }
    } else {
      if (line == "end") {
        std::int64_t sum = 0;
        for (std::int64_t c : t.counts) sum += c;
        if (sum != t.total) throw std::runtime_error("CoincidenceTensor: counts do not sum to total");
        return t;
      }
      int a, b, c, d;
      std::int64_t cnt;
      std::istringstream rs(line);
      if (!(rs >> a >> b >> c >> d >> cnt) || cnt < 0)
        throw std::runtime_error("CoincidenceTensor: malformed data row");
      if (a < 0 || b < 0 || c < 0 || d < 0 || a >= t.grid.n_pixels || b >= t.grid.n_pixels ||
          c >= t.grid.n_pixels || d >= t.grid.n_pixels)
        throw std::runtime_error("CoincidenceTensor: pixel index out of range");
      t.counts[t.grid.index(a, b, c, d)] += cnt;
    }
  }
  throw std::runtime_error("CoincidenceTensor: missing 'end' marker");
}

CoincidenceTensor CoincidenceTensor::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("CoincidenceTensor: cannot open " + path);
  return load(is);
}

}  // namespace riwm
