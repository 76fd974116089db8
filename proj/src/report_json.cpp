#include "report_json.hpp"

#include <cmath>

#include "twolayer/reports.hpp"

namespace twolayer {
namespace detail {

json number(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

json report_json(const RankReport& r) {
  json sv = json::array();
  for (Eigen::Index i = 0; i < r.singular_values.size(); ++i) sv.push_back(r.singular_values[i]);
  return {{"rows", r.rows},
          {"cols", r.cols},
          {"singular_values", std::move(sv)},
          {"numerical_rank", r.numerical_rank},
          {"full_rank", r.full_rank()},
          {"sigma_max", r.sigma_max},
          {"sigma_min", r.sigma_min},
          {"rank_tol", r.rank_tol}};
}

json report_json(const LipschitzEstimate& e) {
  const auto& s = e.inputs_summary;
  return {{"L_W_bound", number(e.L_W_bound)},
          {"L_theta_bound_analytic",
           e.L_theta_bound_analytic ? number(*e.L_theta_bound_analytic) : json(nullptr)},
          {"L_theta_exact", number(e.L_theta_exact)},
          {"inputs_summary",
           {{"theta_max", s.theta_max},
            {"theta_norm", s.theta_norm},
            {"sum_sq_norm_abs_label", s.sum_sq_norm_abs_label},
            {"sum_sq_norm", s.sum_sq_norm}}}};
}

json report_json(const GlobalCertificate& c) {
  return {{"verdict", to_string(c.verdict)},
          {"grad_norm", number(c.grad_norm)},
          {"sigma_min_D", number(c.sigma_min_D)},
          {"sigma_max_D", number(c.sigma_max_D)},
          {"D_rank", c.D_rank},
          {"samples", c.samples},
          {"residual_norm", number(c.residual_norm)},
          {"certified_bound", number(c.certified_bound)},
          {"loss_value", number(c.loss_value)},
          {"sigma_min_W", number(c.sigma_min_W)},
          {"rank_tol", c.rank_tol}};
}

json report_json(const C1ProbeReport& r) {
  json intervals = json::array();
  for (const auto& iv : r.intervals) {
    intervals.push_back({{"lo", iv.lo},
                         {"hi", iv.hi},
                         {"constant_deriv_residual", number(iv.constant_deriv_residual)},
                         {"affine_combination_residual", number(iv.affine_combination_residual)},
                         {"c1", number(iv.c1)},
                         {"c2", number(iv.c2)},
                         {"c3", number(iv.c3)},
                         {"flagged", iv.flagged}});
  }
  return {{"activation", r.activation},
          {"tol", r.tol},
          {"grid_points", r.grid_points},
          {"heuristic", true},
          {"verdict", r.verdict},
          {"intervals", std::move(intervals)}};
}

json report_json(const RunInfo& info) {
  return {{"config", json::parse(run_config_to_json(info.config))},
          {"L", number(info.L)},
          {"gamma", number(info.gamma)},
          {"f0", number(info.f0)},
          {"L_theta_max", number(info.L_theta_max)},
          {"beta_min", number(info.beta_min)},
          {"beta_max", number(info.beta_max)},
          {"early_exits", info.early_exits},
          {"stopped_on_grad_tol", info.stopped_on_grad_tol}};
}

}  // namespace detail

std::string to_json_string(const RankReport& r) { return detail::report_json(r).dump(); }
std::string to_json_string(const LipschitzEstimate& e) { return detail::report_json(e).dump(); }
std::string to_json_string(const GlobalCertificate& c) { return detail::report_json(c).dump(); }
std::string to_json_string(const C1ProbeReport& r) { return detail::report_json(r).dump(); }
std::string to_json_string(const RunInfo& info) { return detail::report_json(info).dump(); }

}  // namespace twolayer
