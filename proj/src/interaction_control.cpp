#include "uam/interaction_control.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace uam {

const char* to_string(ControlMode mode) {
  return mode == ControlMode::Parallel ? "parallel" : "impedance";
}

Mat6 SubspaceSplit::force_projector() const {
  return Mat6::Identity() - Mat6(s_v * s_v_pinv);
}

namespace {

SubspaceSplit build_split(const int force_axis) {
  SubspaceSplit split;
  split.n_f = force_axis < 0 ? 0 : 1;
  split.n_v = 6 - split.n_f;
  split.s_v = Mat::Zero(6, split.n_v);
  split.s_f = Mat::Zero(6, split.n_f);
  int col = 0;
  for (int i = 0; i < 6; ++i) {
    if (i == force_axis) {
      split.s_f(i, 0) = 1.0;
    } else {
      split.s_v(i, col++) = 1.0;
    }
  }
  split.s_v_pinv = damped_pinv(split.s_v, 0.0);
  split.s_f_pinv = damped_pinv(split.s_f, 0.0);
  return split;
}

Mat restrict_diag(const Vec6& diag, const Mat& s, const Mat& s_pinv) {
  return s_pinv * Mat6(diag.asDiagonal()) * s;
}

}  // namespace

SubspaceSplit make_subspace_split(int approach_axis) {
  if (approach_axis < 0 || approach_axis > 2) {
    throw std::domain_error("subspace split: approach axis must be 0, 1 or 2");
  }
  return build_split(approach_axis);
}

SubspaceSplit full_motion_split() { return build_split(-1); }

InteractionGains InteractionGains::defaults() {
  InteractionGains g;
  g.impedance_mass << 0.5, 0.5, 0.5, 0.001, 0.001, 0.001;
  g.impedance_stiffness << 30.0, 30.0, 30.0, 0.1, 0.1, 0.1;
  g.impedance_damping << 7.0, 7.0, 7.0, 0.2, 0.2, 0.2;
  g.force_kp << 0.25, 0.25, 0.25, 0.5, 0.5, 0.5;
  g.force_kd << 0.1, 0.1, 0.1, 0.1, 0.1, 0.1;
  g.compliance = Mat6::Zero();
  g.compliance(0, 0) = 0.3;
  return g;
}

void require_positive_definite(const Mat& m, const char* what) {
  if (m.rows() != m.cols() || !m.allFinite()) {
    throw std::invalid_argument(std::string(what) + ": gain matrix must be square and finite");
  }
  if (m.rows() == 0) return;
  if (!m.isApprox(m.transpose(), 1e-12)) {
    throw std::invalid_argument(std::string(what) + ": gain matrix is not symmetric");
  }
  Eigen::LLT<Mat> llt(m);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument(std::string(what) + ": gain matrix is not positive definite");
  }
}

ImpedanceGains restrict_impedance(const InteractionGains& g, const SubspaceSplit& split) {
  ImpedanceGains out;
  out.mass = restrict_diag(g.impedance_mass, split.s_v, split.s_v_pinv);
  out.stiffness = restrict_diag(g.impedance_stiffness, split.s_v, split.s_v_pinv);
  out.damping = restrict_diag(g.impedance_damping, split.s_v, split.s_v_pinv);
  require_positive_definite(out.mass, "impedance mass M_a");
  require_positive_definite(out.stiffness, "impedance stiffness K_Pa");
  require_positive_definite(out.damping, "impedance damping K_Da");
  return out;
}

ForceGains restrict_force(const InteractionGains& g, const SubspaceSplit& split) {
  ForceGains out;
  out.kp = restrict_diag(g.force_kp, split.s_f, split.s_f_pinv);
  out.kd = restrict_diag(g.force_kd, split.s_f, split.s_f_pinv);
  out.compliance = g.compliance;
  require_positive_definite(out.kp, "force gain K_Pf");
  require_positive_definite(out.kd, "force gain K_Df");
  return out;
}

Vec6 force_error(const Vec3& f_ext, const Vec3& f_d) {
  Vec6 e = Vec6::Zero();
  e.head<3>() = f_ext - f_d;
  return e;
}

Vec lambda_dot(const SubspaceSplit& split, const Vec6& e_f_now, const Vec6& e_f_prev, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("lambda_dot: dt must be positive");
  return split.s_f_pinv * ((e_f_now - e_f_prev) / dt);
}

Vec LowPassFilter::update(const Vec& raw, double dt) {
  if (!primed_ || state_.size() != raw.size()) {
    state_ = Vec::Zero(raw.size());
    primed_ = true;
  }
  const double tau = 1.0 / (2.0 * M_PI * cutoff_hz_);
  const double alpha = dt / (dt + tau);
  state_ += alpha * (raw - state_);
  return state_;
}

Vec6 force_task_correction(const SubspaceSplit& split, const ForceGains& gains, const Vec6& e_f,
                           const Vec& lambda_dot) {
  if (split.n_f == 0) return Vec6::Zero();
  const Vec inner = gains.kp * (split.s_f_pinv * e_f) + gains.kd * lambda_dot;
  return gains.compliance * (split.s_f * inner);
}

Vec5 force_law(const Mat65& jac, const SubspaceSplit& split, const ForceGains& gains, const Vec6& e_f,
               const Vec& lambda_dot, double pinv_damping) {
  if (split.n_f == 0) return Vec5::Zero();
  const Vec6 cartesian = split.force_projector() * force_task_correction(split, gains, e_f, lambda_dot);
  return damped_pinv(jac, pinv_damping) * cartesian;
}

Vec6 impedance_task_acceleration(const SubspaceSplit& split, const ImpedanceGains& gains, const Vec6& xddot_d,
                                 const Vec6& e, const Vec6& edot, const SpatialWrench& f_ext) {
  // M_a^-1 M_a S_v^+ xddot_d cancels to S_v^+ xddot_d.
  const Vec rhs = gains.damping * (split.s_v_pinv * edot) + gains.stiffness * (split.s_v_pinv * e) -
                  split.s_v_pinv * f_ext;
  const Vec a_v = split.s_v_pinv * xddot_d + gains.mass.ldlt().solve(rhs);
  return split.s_v * a_v;
}

Vec5 impedance_law(const Mat65& jac, const Vec6& jdot_qdot, const SubspaceSplit& split,
                   const ImpedanceGains& gains, const Vec6& xddot_d, const Vec6& e, const Vec6& edot,
                   const SpatialWrench& f_ext, double pinv_damping) {
  const Vec6 task = impedance_task_acceleration(split, gains, xddot_d, e, edot, f_ext) - jdot_qdot;
  return damped_pinv(jac, pinv_damping) * task;
}

ControllerState parallel_step(const ControllerState& state, const Vec5& u_q, const Vec5& u_f, double dt,
                              const Vec5& lower, const Vec5& upper) {
  if (!(dt > 0.0)) throw std::invalid_argument("parallel_step: dt must be positive");
  ControllerState next = state;
  Vec5 u_tot = u_q;
  if (state.mode == ControlMode::Parallel) u_tot += u_f;
  next.qdot_ref += u_tot * dt;
  next.q_ref += next.qdot_ref * dt;
  for (int i = 0; i < kArmJoints; ++i) {
    if (next.q_ref(i) < lower(i)) {
      next.q_ref(i) = lower(i);
      next.qdot_ref(i) = 0.0;
    } else if (next.q_ref(i) > upper(i)) {
      next.q_ref(i) = upper(i);
      next.qdot_ref(i) = 0.0;
    }
  }
  return next;
}

Vec6 pose_error(const Pose& x_d, const Pose& x) {
  Vec6 e;
  e.head<3>() = x_d.position - x.position;
  e.tail<3>() = rotation_vector(x_d.rotation() * x.rotation().transpose());
  return e;
}

void InteractionConfig::validate() const {
  if (approach_axis < 0 || approach_axis > 2) {
    throw std::invalid_argument("interaction: approach axis must be 0, 1 or 2");
  }
  if (!(pinv_damping >= 0.0)) throw std::invalid_argument("interaction: pinv damping must be >= 0");
  if (!(lambda_filter_hz > 0.0)) throw std::invalid_argument("interaction: filter cutoff must be positive");
  // Full-space checks cover every split that can be built from these diagonals.
  const SubspaceSplit full = full_motion_split();
  restrict_impedance(gains, full);
  const auto fg = restrict_force(gains, make_subspace_split(approach_axis));
  (void)fg;
  for (int i = 0; i < 6; ++i) {
    if (!(gains.force_kp(i) > 0.0) || !(gains.force_kd(i) > 0.0)) {
      throw std::invalid_argument("force gains: K_Pf and K_Df must be positive definite");
    }
  }
  const Mat6& c = gains.compliance;
  if (!c.allFinite() || !c.isApprox(c.transpose(), 1e-12)) {
    throw std::invalid_argument("compliance C must be finite and symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat6> eig(c);
  if (eig.eigenvalues().minCoeff() < -1e-12) {
    throw std::invalid_argument("compliance C must be positive semi-definite");
  }
  if (c(approach_axis, approach_axis) <= 0.0) {
    throw std::invalid_argument("compliance C must be positive along the approach axis");
  }
}

ArmInteractionController::ArmInteractionController(ArmKinematics kin, InteractionConfig config,
                                                   const Vec5& q_init)
    : kin_(std::move(kin)),
      config_(std::move(config)),
      motion_split_(full_motion_split()),
      parallel_split_(make_subspace_split(config_.approach_axis)),
      motion_gains_(restrict_impedance(config_.gains, motion_split_)),
      parallel_gains_(restrict_impedance(config_.gains, parallel_split_)),
      force_gains_(restrict_force(config_.gains, parallel_split_)),
      lambda_filter_(config_.lambda_filter_hz) {
  if (!kin_.within_limits(q_init)) throw std::domain_error("controller: initial configuration outside limits");
  state_.q_ref = q_init;
}

const ArmInteractionController::Output& ArmInteractionController::update(const TaskReference& ref,
                                                                         const SpatialWrench& measured,
                                                                         ControlMode mode, double dt) {
  if (mode != state_.mode) {
    state_.mode = mode;
    state_.e_f_valid = false;
    lambda_filter_.reset();
  }

  const Mat65 jac = jacobian(kin_, state_.q_ref);
  const Vec6 jdot_qdot = jacobian_dot(kin_, state_.q_ref, state_.qdot_ref) * state_.qdot_ref;
  const Pose x = forward_kinematics(kin_, state_.q_ref);

  out_.pose_err = pose_error(ref.x_d, x);
  const Vec6 edot = ref.xdot_d - jac * state_.qdot_ref;

  const SubspaceSplit& sp = split(mode);
  const ImpedanceGains& ig = mode == ControlMode::Parallel ? parallel_gains_ : motion_gains_;
  out_.u_q = impedance_law(jac, jdot_qdot, sp, ig, ref.xddot_d, out_.pose_err, edot, measured,
                           config_.pinv_damping);

  out_.u_f.setZero();
  out_.lambda_dot = 0.0;
  if (mode == ControlMode::Parallel) {
    const Vec3 reaction = -measured.head<3>();
    out_.force_err = force_error(reaction, -ref.f_d);
    const Vec6 prev = state_.e_f_valid ? state_.e_f_prev : out_.force_err;
    const Vec ld = lambda_filter_.update(lambda_dot(sp, out_.force_err, prev, dt), dt);
    out_.lambda_dot = ld.size() > 0 ? ld(0) : 0.0;
    out_.u_f = force_law(jac, sp, force_gains_, out_.force_err, ld, config_.pinv_damping);
    state_.e_f_prev = out_.force_err;
    state_.e_f_valid = true;
  } else {
    out_.force_err.setZero();
  }

  state_ = parallel_step(state_, out_.u_q, out_.u_f, dt, kin_.joint_lower, kin_.joint_upper);
  return out_;
}

}  // namespace uam
