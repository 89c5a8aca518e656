#pragma once

// AC evaluation of a full dispatch: a Newton power flow per conductor and
// step turns generator/storage setpoints into a nonlinear operating point,
// which is then checked against every network and storage limit.
//
// Network model: pi-model branches (series r + jx, half the charging at each
// end), bus shunts, one slack bus per conductor. Branch limits apply to the
// series flow at both ends, as in the branch-flow relaxation.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridstore/datamodel.hpp"
#include "gridstore/formulation.hpp"
#include "gridstore/solution.hpp"
#include "gridstore/verify.hpp"

namespace gridstore {

struct PowerFlowOptions {
  double tol = 1e-10;      // mismatch, per-unit
  int max_iterations = 30;
  int max_type_switches = 10;
  double limit_tol = 1e-6;  // per-unit, for the network limit checks
};

struct NetworkViolation {
  std::string what;  // e.g. "voltage bus 4/a step 12"
  double amount = 0.0;
};

struct AcDispatchResult {
  bool converged = false;
  bool feasible = false;
  double objective = 0.0;            // piecewise-linear generation cost ($)
  double quadratic_objective = 0.0;  // exact quadratic cost ($)
  Solution point;                    // formulation ac-nl, keyed AC values
  ViolationReport storage;
  std::vector<NetworkViolation> violations;
  std::string message;

  double max_violation() const {
    double m = 0.0;
    for (const auto& v : violations) m = std::max(m, v.amount);
    return m;
  }
};

namespace power_flow_detail {

enum class BusType { pq, pv, slack };

struct Island {
  std::size_t conductor = 0;
  std::vector<std::size_t> buses;      // network bus indices
  std::map<std::size_t, std::size_t> local;  // bus -> position
  Eigen::MatrixXcd y;
  std::size_t slack = 0;               // position
};

inline Island build_island(const Network& net, std::size_t c) {
  Island is;
  is.conductor = c;
  for (std::size_t i = 0; i < net.buses.size(); ++i)
    if (net.buses[i].local_conductor(c) != npos) {
      is.local[i] = is.buses.size();
      is.buses.push_back(i);
    }
  const auto n = static_cast<Eigen::Index>(is.buses.size());
  is.y = Eigen::MatrixXcd::Zero(n, n);
  const double base = net.base_mva;
  for (const auto& br : net.branches) {
    if (br.conductor != c) continue;
    const auto f = static_cast<Eigen::Index>(is.local.at(net.bus_index(br.from_bus)));
    const auto t = static_cast<Eigen::Index>(is.local.at(net.bus_index(br.to_bus)));
    const Complex ys = 1.0 / Complex(br.r, br.x);
    const Complex ysh(0.0, 0.5 * br.b);
    is.y(f, f) += ys + ysh;
    is.y(t, t) += ys + ysh;
    is.y(f, t) -= ys;
    is.y(t, f) -= ys;
  }
  for (std::size_t p = 0; p < is.buses.size(); ++p) {
    const Bus& b = net.buses[is.buses[p]];
    is.y(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p)) += Complex(b.shunt_g, b.shunt_b) / base;
  }
  std::size_t slack = npos;
  for (std::size_t p = 0; p < is.buses.size(); ++p)
    if (net.buses[is.buses[p]].reference) {
      slack = p;
      break;
    }
  is.slack = slack == npos ? 0 : slack;
  return is;
}

/// Complex injections V .* conj(Y V).
inline Eigen::VectorXcd injections(const Eigen::MatrixXcd& y, const Eigen::VectorXcd& v) {
  return v.cwiseProduct((y * v).conjugate());
}

/// Newton-Raphson in polar form. `p_spec`/`q_spec` are net injections;
/// magnitudes of PV and slack buses and the slack angle stay fixed.
inline bool newton(const Eigen::MatrixXcd& y, const std::vector<BusType>& type, const Eigen::VectorXd& p_spec,
                   const Eigen::VectorXd& q_spec, Eigen::VectorXd& vm, Eigen::VectorXd& va, const PowerFlowOptions& opt) {
  const auto n = static_cast<Eigen::Index>(type.size());
  std::vector<Eigen::Index> ang, mag;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (type[static_cast<std::size_t>(i)] != BusType::slack) ang.push_back(i);
    if (type[static_cast<std::size_t>(i)] == BusType::pq) mag.push_back(i);
  }
  const auto na = static_cast<Eigen::Index>(ang.size()), nm = static_cast<Eigen::Index>(mag.size());
  for (int it = 0; it <= opt.max_iterations; ++it) {
    Eigen::VectorXcd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = std::polar(vm(i), va(i));
    const Eigen::VectorXcd s = injections(y, v);
    Eigen::VectorXd mis(na + nm);
    for (Eigen::Index a = 0; a < na; ++a) mis(a) = s(ang[static_cast<std::size_t>(a)]).real() - p_spec(ang[static_cast<std::size_t>(a)]);
    for (Eigen::Index b = 0; b < nm; ++b) mis(na + b) = s(mag[static_cast<std::size_t>(b)]).imag() - q_spec(mag[static_cast<std::size_t>(b)]);
    if (mis.size() == 0 || mis.lpNorm<Eigen::Infinity>() <= opt.tol) return true;
    if (it == opt.max_iterations) break;
    // dS/dVa = j diag(V) conj(diag(I) - Y diag(V));  dS/dVm = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
    const Eigen::VectorXcd i_bus = y * v;
    Eigen::MatrixXcd ds_da(n, n), ds_dm(n, n);
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = 0; c < n; ++c) {
        const Complex vn = v(c) / vm(c);
        Complex da = -v(r) * std::conj(y(r, c) * v(c));
        Complex dm = v(r) * std::conj(y(r, c) * vn);
        if (r == c) {
          da += v(r) * std::conj(i_bus(r));
          dm += std::conj(i_bus(r)) * vn;
        }
        ds_da(r, c) = Complex(0.0, 1.0) * da;
        ds_dm(r, c) = dm;
      }
    Eigen::MatrixXd j(na + nm, na + nm);
    for (Eigen::Index a = 0; a < na; ++a) {
      const auto r = ang[static_cast<std::size_t>(a)];
      for (Eigen::Index a2 = 0; a2 < na; ++a2) j(a, a2) = ds_da(r, ang[static_cast<std::size_t>(a2)]).real();
      for (Eigen::Index b2 = 0; b2 < nm; ++b2) j(a, na + b2) = ds_dm(r, mag[static_cast<std::size_t>(b2)]).real();
    }
    for (Eigen::Index b = 0; b < nm; ++b) {
      const auto r = mag[static_cast<std::size_t>(b)];
      for (Eigen::Index a2 = 0; a2 < na; ++a2) j(na + b, a2) = ds_da(r, ang[static_cast<std::size_t>(a2)]).imag();
      for (Eigen::Index b2 = 0; b2 < nm; ++b2) j(na + b, na + b2) = ds_dm(r, mag[static_cast<std::size_t>(b2)]).imag();
    }
    const Eigen::VectorXd dx = j.partialPivLu().solve(-mis);
    if (!dx.allFinite()) return false;
    for (Eigen::Index a = 0; a < na; ++a) va(ang[static_cast<std::size_t>(a)]) += dx(a);
    for (Eigen::Index b = 0; b < nm; ++b) vm(mag[static_cast<std::size_t>(b)]) += dx(na + b);
  }
  return false;
}

}  // namespace power_flow_detail

/// Runs an AC power flow for every step and conductor with the generator
/// active powers and voltage magnitudes of `setpoints` (the slack generator
/// balances), and the storage converters drawing the setpoint net power plus
/// their copper loss at the solved voltage. Generator reactive limits are
/// enforced by PV-to-PQ switching. The resulting point is checked against
/// voltage, generator, branch and storage limits; `objective` uses the same
/// piecewise-linear cost as the optimization models.
inline AcDispatchResult evaluate_ac_dispatch(const Network& net, const TimeGrid& grid, const Solution& setpoints,
                                             int segments, const PowerFlowOptions& opt = {}) {
  using namespace power_flow_detail;
  AcDispatchResult res;
  res.point.formulation = Formulation::ac_nl;
  res.converged = true;
  const double base = net.base_mva;
  const std::size_t nc = net.conductors.size();
  std::vector<Island> islands;
  for (std::size_t c = 0; c < nc; ++c) islands.push_back(build_island(net, c));
  auto& out = res.point.values;
  auto flag = [&](std::string what, double amount) {
    if (amount > opt.limit_tol) res.violations.push_back({std::move(what), amount});
  };
  auto where = [&](const std::string& kind, const std::string& id, std::size_t c, std::size_t k) {
    return kind + " " + id + "/" + net.conductors[c] + " step " + std::to_string(k);
  };

  for (std::size_t k = 0; k < grid.steps(); ++k) {
    // Storage: keep each conductor's net power P - R L from the setpoint.
    struct Conv {
      std::size_t di, cond, pos;
      double net_p, q, r, p;
    };
    std::vector<Conv> convs;
    for (std::size_t di = 0; di < net.storages.size(); ++di) {
      const auto& d = net.storages[di];
      const Bus& bus = net.bus(d.bus);
      for (std::size_t p = 0; p < bus.conductors.size(); ++p) {
        const auto c = bus.conductors[p];
        const double pp = setpoints.at({Role::stor_p, di, c, k});
        const double l = setpoints.get({Role::stor_l, di, c, k}).value_or(0.0);
        const double q = setpoints.get({Role::stor_q, di, c, k}).value_or(0.0);
        convs.push_back({di, c, p, pp - d.z_phase[p].real() * l, q, d.z_phase[p].real(), pp});
      }
    }
    std::vector<Eigen::VectorXd> vm(nc), va(nc);
    for (int outer = 0; outer < 50; ++outer) {
      double change = 0.0;
      for (std::size_t c = 0; c < nc; ++c) {
        const auto& is = islands[c];
        const auto n = static_cast<Eigen::Index>(is.buses.size());
        if (n == 0) continue;
        std::vector<BusType> type(is.buses.size(), BusType::pq);
        Eigen::VectorXd p_spec = Eigen::VectorXd::Zero(n), q_spec = Eigen::VectorXd::Zero(n);
        Eigen::VectorXd q_min = Eigen::VectorXd::Zero(n), q_max = Eigen::VectorXd::Zero(n);
        Eigen::VectorXd vset = Eigen::VectorXd::Ones(n);
        for (std::size_t pos = 0; pos < is.buses.size(); ++pos) {
          const Bus& b = net.buses[is.buses[pos]];
          const auto lc = b.local_conductor(c);
          p_spec(static_cast<Eigen::Index>(pos)) -= b.load[lc][k].real() / base;
          q_spec(static_cast<Eigen::Index>(pos)) -= b.load[lc][k].imag() / base;
          if (auto vmv = setpoints.get({Role::bus_vm, is.buses[pos], c, k})) vset(static_cast<Eigen::Index>(pos)) = *vmv;
          else if (auto w = setpoints.get({Role::bus_w, is.buses[pos], c, k})) vset(static_cast<Eigen::Index>(pos)) = std::sqrt(*w);
        }
        for (std::size_t gi = 0; gi < net.generators.size(); ++gi) {
          const auto& g = net.generators[gi];
          if (g.conductor != c) continue;
          const auto pos = static_cast<Eigen::Index>(is.local.at(net.bus_index(g.bus)));
          if (static_cast<std::size_t>(pos) != is.slack) {
            p_spec(pos) += setpoints.at({Role::gen_p, gi, c, k});
            type[static_cast<std::size_t>(pos)] = BusType::pv;
          }
          q_min(pos) += g.q_min / base;
          q_max(pos) += g.q_max / base;
        }
        type[is.slack] = BusType::slack;
        for (const auto& cv : convs)
          if (cv.cond == c) {
            const auto pos = static_cast<Eigen::Index>(is.local.at(net.bus_index(net.storages[cv.di].bus)));
            p_spec(pos) -= cv.p;
            q_spec(pos) -= cv.q;
          }
        Eigen::VectorXd m0 = vset, a0 = Eigen::VectorXd::Zero(n);
        if (vm[c].size() == n) {
          a0 = va[c];
          for (Eigen::Index i = 0; i < n; ++i)
            if (type[static_cast<std::size_t>(i)] == BusType::pq) m0(i) = vm[c](i);
        }
        const auto sl = static_cast<Eigen::Index>(is.slack);
        Eigen::VectorXd m, a;
        // Solves with slack magnitude u; PV buses whose reactive need leaves
        // the generator range become PQ at the limit. Returns the slack bus
        // generator reactive output, NaN without convergence.
        auto run = [&](double u, double offset) {
          auto t = type;
          m = m0;
          a = a0;
          for (Eigen::Index i = 0; i < n; ++i)
            if (t[static_cast<std::size_t>(i)] == BusType::pv) {
              const Bus& b = net.buses[is.buses[static_cast<std::size_t>(i)]];
              const auto lc = b.local_conductor(c);
              m(i) = std::clamp(m0(i) + offset, b.u_min[lc], b.u_max[lc]);
            }
          m(sl) = u;
          Eigen::VectorXd q_fixed = q_spec;
          for (int sw = 0; sw <= opt.max_type_switches; ++sw) {
            if (!newton(is.y, t, p_spec, q_fixed, m, a, opt)) return std::nan("");
            Eigen::VectorXcd v(n);
            for (Eigen::Index i = 0; i < n; ++i) v(i) = std::polar(m(i), a(i));
            const Eigen::VectorXcd s = injections(is.y, v);
            bool switched = false;
            for (Eigen::Index i = 0; i < n; ++i) {
              if (t[static_cast<std::size_t>(i)] != BusType::pv) continue;
              const double need = s(i).imag() - q_spec(i);
              if (need > q_max(i) + opt.limit_tol || need < q_min(i) - opt.limit_tol) {
                t[static_cast<std::size_t>(i)] = BusType::pq;
                q_fixed(i) = q_spec(i) + std::clamp(need, q_min(i), q_max(i));
                switched = true;
              }
            }
            if (!switched) return s(sl).imag() - q_spec(sl);
          }
          return std::nan("");
        };
        // When the slack generator's reactive output is out of range, move
        // the slack magnitude, then all PV magnitudes together, by secant
        // steps toward the nearest limit.
        const Bus& sb = net.buses[is.buses[is.slack]];
        const bool has_slack_gen = q_max(sl) != 0.0 || q_min(sl) != 0.0;
        double u = m0(sl), offset = 0.0, q = run(u, offset);
        auto excess = [&](double qv) { return qv - std::clamp(qv, q_min(sl), q_max(sl)); };
        auto secant = [&](double& x, double lo, double hi, auto&& eval) {
          double x_prev = x, q_prev = q;
          x = std::clamp(x + (q > q_max(sl) ? -0.01 : 0.01), lo, hi);
          if (x == x_prev) return;
          q = eval(x);
          for (int it = 0; it < 30 && std::isfinite(q) && std::abs(excess(q)) > 0.1 * opt.limit_tol; ++it) {
            const double slope = (q - q_prev) / (x - x_prev);
            if (!std::isfinite(slope) || slope == 0.0) return;
            const double goal = q - excess(q) - (excess(q) > 0.0 ? 0.5 : -0.5) * opt.limit_tol;
            const double next = std::clamp(x + (goal - q) / slope, lo, hi);
            if (next == x) return;
            x_prev = x;
            q_prev = q;
            x = next;
            q = eval(x);
          }
        };
        if (has_slack_gen && std::isfinite(q) && std::abs(excess(q)) > opt.limit_tol)
          secant(u, sb.u_min[sb.local_conductor(c)], sb.u_max[sb.local_conductor(c)],
                 [&](double x) { return run(x, offset); });
        if (has_slack_gen && std::isfinite(q) && std::abs(excess(q)) > opt.limit_tol)
          secant(offset, -0.2, 0.2, [&](double x) { return run(u, x); });
        // Leave m/a at the final evaluation.
        if (std::isfinite(q)) q = run(u, offset);
        if (!std::isfinite(q)) {
          res.converged = false;
          res.message = "power flow did not converge on conductor '" + net.conductors[c] + "' at step " + std::to_string(k);
          return res;
        }
        vm[c] = m;
        va[c] = a;
      }
      // Update converter draws with the copper loss at the solved voltage.
      for (auto& cv : convs) {
        const auto& is = islands[cv.cond];
        const double u = vm[cv.cond](static_cast<Eigen::Index>(is.local.at(net.bus_index(net.storages[cv.di].bus))));
        double p = cv.p;
        for (int it = 0; it < 100; ++it) {
          const double next = cv.net_p + cv.r * (p * p + cv.q * cv.q) / (u * u);
          if (std::abs(next - p) <= 1e-15) {
            p = next;
            break;
          }
          p = next;
        }
        change = std::max(change, std::abs(p - cv.p));
        cv.p = p;
      }
      if (change <= 1e-12) break;
    }

    // Record the operating point and check the network limits.
    for (std::size_t c = 0; c < nc; ++c) {
      const auto& is = islands[c];
      const auto n = static_cast<Eigen::Index>(is.buses.size());
      if (n == 0) continue;
      Eigen::VectorXcd v(n);
      for (Eigen::Index i = 0; i < n; ++i) v(i) = std::polar(vm[c](i), va[c](i));
      const Eigen::VectorXcd s = injections(is.y, v);
      for (std::size_t pos = 0; pos < is.buses.size(); ++pos) {
        const auto bi = is.buses[pos];
        const Bus& b = net.buses[bi];
        const auto lc = b.local_conductor(c);
        const double u = vm[c](static_cast<Eigen::Index>(pos));
        out[{Role::bus_vm, bi, c, k}] = u;
        out[{Role::bus_angle, bi, c, k}] = va[c](static_cast<Eigen::Index>(pos));
        flag(where("voltage", b.id, c, k), std::max({0.0, b.u_min[lc] - u, u - b.u_max[lc]}));
        // Generator output needed at this bus: injection + load + storage draw.
        Complex gen = s(static_cast<Eigen::Index>(pos)) + b.load[lc][k] / base;
        for (const auto& cv : convs)
          if (cv.cond == c && net.bus_index(net.storages[cv.di].bus) == bi) gen += Complex(cv.p, cv.q);
        std::vector<std::size_t> gens;
        double fixed_p = 0.0, qlo = 0.0, qhi = 0.0;
        for (std::size_t gi = 0; gi < net.generators.size(); ++gi) {
          const auto& g = net.generators[gi];
          if (g.conductor != c || net.bus_index(g.bus) != bi) continue;
          gens.push_back(gi);
          qlo += g.q_min / base;
          qhi += g.q_max / base;
        }
        if (gens.empty()) continue;
        const bool slack = pos == is.slack;
        for (std::size_t t = 0; t < gens.size(); ++t) {
          const auto gi = gens[t];
          const auto& g = net.generators[gi];
          double pg;
          if (slack && t == 0) {
            for (std::size_t u2 = 1; u2 < gens.size(); ++u2) fixed_p += setpoints.at({Role::gen_p, gens[u2], c, k});
            pg = gen.real() - fixed_p;
          } else {
            pg = setpoints.at({Role::gen_p, gi, c, k});
          }
          // Reactive output shared in proportion to the generator ranges.
          const double span = qhi - qlo;
          const double frac = span > 0.0 ? (g.q_max - g.q_min) / base / span : 1.0 / static_cast<double>(gens.size());
          const double qg = g.q_min / base + frac * (gen.imag() - qlo);
          out[{Role::gen_p, gi, c, k}] = pg;
          out[{Role::gen_q, gi, c, k}] = qg;
          flag(where("generator p", g.id, c, k), std::max({0.0, g.p_min / base - pg, pg - g.p_max / base}));
          flag(where("generator q", g.id, c, k), std::max({0.0, g.q_min / base - qg, qg - g.q_max / base}));
          res.objective += grid.durations[k] * pwl_cost(g, pg * base, segments);
          res.quadratic_objective += grid.durations[k] * g.cost(pg * base);
        }
      }
      for (std::size_t li = 0; li < net.branches.size(); ++li) {
        const auto& br = net.branches[li];
        if (br.conductor != c) continue;
        const auto f = static_cast<Eigen::Index>(is.local.at(net.bus_index(br.from_bus)));
        const auto t = static_cast<Eigen::Index>(is.local.at(net.bus_index(br.to_bus)));
        const Complex cur = (v(f) - v(t)) / Complex(br.r, br.x);
        const Complex s_ft = v(f) * std::conj(cur), s_tf = -v(t) * std::conj(cur);
        out[{Role::branch_p_from, li, c, k}] = s_ft.real();
        out[{Role::branch_q_from, li, c, k}] = s_ft.imag();
        out[{Role::branch_p_to, li, c, k}] = s_tf.real();
        out[{Role::branch_q_to, li, c, k}] = s_tf.imag();
        out[{Role::branch_l, li, c, k}] = std::norm(cur);
        const double lim = br.rating_mva / base;
        flag(where("branch", br.id, c, k), std::max({0.0, std::abs(s_ft) - lim, std::abs(s_tf) - lim}));
      }
    }
    for (std::size_t di = 0; di < net.storages.size(); ++di) {
      const auto& d = net.storages[di];
      const auto bi = net.bus_index(d.bus);
      double loss_q = 0.0, sum_q = 0.0;
      for (const auto& cv : convs) {
        if (cv.di != di) continue;
        const double u = out.at({Role::bus_vm, bi, cv.cond, k});
        const double i = std::hypot(cv.p, cv.q) / u;
        out[{Role::stor_p, di, cv.cond, k}] = cv.p;
        out[{Role::stor_q, di, cv.cond, k}] = cv.q;
        out[{Role::stor_i, di, cv.cond, k}] = i;
        loss_q += d.z_phase[cv.pos].imag() * i * i;
        sum_q += cv.q;
      }
      const double pc = setpoints.at({Role::stor_pc, di, 0, k}), pd = setpoints.at({Role::stor_pd, di, 0, k});
      out[{Role::stor_pc, di, 0, k}] = pc;
      out[{Role::stor_pd, di, 0, k}] = pd;
      out[{Role::stor_pstor, di, 0, k}] = pd - pc;
      out[{Role::stor_e, di, 0, k}] = setpoints.at({Role::stor_e, di, 0, k});
      out[{Role::stor_qint, di, 0, k}] = sum_q - loss_q - d.s_ext[k].imag() / base;
      out[{Role::stor_z, di, 0, k}] = pc > 0.0 ? 1.0 : 0.0;
    }
  }
  res.point.objective = res.objective;
  res.point.bound = -kInf;
  res.point.status = "evaluated";
  res.storage = emit_storage_ac_residuals(net, grid).evaluate(res.point.values, opt.limit_tol);
  res.storage.formulation = to_string(Formulation::ac_nl);
  res.feasible = res.converged && res.violations.empty() && res.storage.feasible;
  return res;
}

}  // namespace gridstore
