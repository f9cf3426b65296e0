#pragma once

#include "uam/arm_model.hpp"
#include "uam/spatial_math.hpp"

namespace uam {

enum class ControlMode { ImpedanceOnly, Parallel };

const char* to_string(ControlMode mode);

/// Partition of 6-D task space into velocity-controlled (S_v, n_v columns) and
/// force-controlled (S_f, n_f columns) subspaces. Columns are unit basis vectors.
struct SubspaceSplit {
  Mat s_v;
  Mat s_f;
  Mat s_v_pinv;
  Mat s_f_pinv;
  int n_v = 6;
  int n_f = 0;

  /// Projector onto the force-controlled subspace, I - S_v S_v^+.
  Mat6 force_projector() const;
};

/// Force control on translational axis 0..2, impedance on the other five.
/// Throws std::domain_error for any other index.
SubspaceSplit make_subspace_split(int approach_axis);

/// Every axis impedance-controlled (n_f = 0); used while no contact is sought.
SubspaceSplit full_motion_split();

struct ImpedanceGains {
  Mat mass;       // M_a
  Mat stiffness;  // K_Pa
  Mat damping;    // K_Da
};

struct ForceGains {
  Mat kp;  // K_Pf
  Mat kd;  // K_Df
  Mat6 compliance = Mat6::Zero();  // C
};

/// 6-D diagonal gain blocks (three translational, three rotational entries) plus
/// the compliance matrix. Restricted to a split's selected axes on use.
struct InteractionGains {
  Vec6 impedance_mass;
  Vec6 impedance_stiffness;
  Vec6 impedance_damping;
  Vec6 force_kp;
  Vec6 force_kd;
  Mat6 compliance = Mat6::Zero();

  /// Experimental gain set of the inspection platform; compliance along x.
  static InteractionGains defaults();
};

/// Throws std::invalid_argument naming `what` unless m is symmetric positive definite.
void require_positive_definite(const Mat& m, const char* what);

ImpedanceGains restrict_impedance(const InteractionGains& g, const SubspaceSplit& split);
ForceGains restrict_force(const InteractionGains& g, const SubspaceSplit& split);

struct TaskReference {
  Pose x_d;
  SpatialTwist xdot_d = SpatialTwist::Zero();
  Vec6 xddot_d = Vec6::Zero();
  Vec3 f_d = Vec3::Zero();  // desired push of the probe on the surface, F_base
};

struct ControllerState {
  Vec5 q_ref = Vec5::Zero();
  Vec5 qdot_ref = Vec5::Zero();
  Vec6 e_f_prev = Vec6::Zero();
  bool e_f_valid = false;
  ControlMode mode = ControlMode::ImpedanceOnly;
};

/// (f_ext - f_d ; 0_3)
Vec6 force_error(const Vec3& f_ext, const Vec3& f_d);

/// Unfiltered S_f^+ (e_now - e_prev) / dt. Empty when n_f = 0.
Vec lambda_dot(const SubspaceSplit& split, const Vec6& e_f_now, const Vec6& e_f_prev, double dt);

/// First-order low-pass used on the force-error derivative.
class LowPassFilter {
 public:
  explicit LowPassFilter(double cutoff_hz = 20.0) : cutoff_hz_(cutoff_hz) {}

  Vec update(const Vec& raw, double dt);
  void reset() { primed_ = false; }
  double cutoff_hz() const { return cutoff_hz_; }

 private:
  double cutoff_hz_;
  Vec state_;
  bool primed_ = false;
};

/// u_f = J^+ (I - S_v S_v^+) C S_f (K_Pf S_f^+ e_F + K_Df lambda_dot).
Vec5 force_law(const Mat65& jac, const SubspaceSplit& split, const ForceGains& gains, const Vec6& e_f,
               const Vec& lambda_dot, double pinv_damping = 1e-3);

/// u_q = J^+ (S_v a_v - Jdot qdot), with
/// a_v = S_v^+ xddot_d + M_a^-1 (K_Da S_v^+ edot + K_Pa S_v^+ e - S_v^+ F_ext).
Vec5 impedance_law(const Mat65& jac, const Vec6& jdot_qdot, const SubspaceSplit& split,
                   const ImpedanceGains& gains, const Vec6& xddot_d, const Vec6& e, const Vec6& edot,
                   const SpatialWrench& f_ext, double pinv_damping = 1e-3);

/// Selected-axis part of the impedance acceleration, S_v a_v (for diagnostics and tests).
Vec6 impedance_task_acceleration(const SubspaceSplit& split, const ImpedanceGains& gains, const Vec6& xddot_d,
                                 const Vec6& e, const Vec6& edot, const SpatialWrench& f_ext);

/// Cartesian force correction C S_f (K_Pf S_f^+ e_F + K_Df lambda_dot), before projection.
Vec6 force_task_correction(const SubspaceSplit& split, const ForceGains& gains, const Vec6& e_f,
                           const Vec& lambda_dot);

/// Semi-implicit double integration of u_q + u_f into servo set-points.
/// ImpedanceOnly mode ignores u_f. Joints hitting a limit are clamped and
/// their rate zeroed.
ControllerState parallel_step(const ControllerState& state, const Vec5& u_q, const Vec5& u_f, double dt,
                              const Vec5& lower, const Vec5& upper);

/// (p_d - p ; rotation vector of R_d R^T)
Vec6 pose_error(const Pose& x_d, const Pose& x);

struct InteractionConfig {
  int approach_axis = 0;
  double pinv_damping = 1e-3;
  double lambda_filter_hz = 20.0;
  InteractionGains gains = InteractionGains::defaults();

  void validate() const;
};

/// Runs the parallel force-impedance loop on the commanded joint state.
///
/// The measured wrench passed to update() is the wrench the probe exerts on the
/// environment in F_base. The impedance law uses it as-is, so the probe yields
/// along external pushes. The force loop works on the surface reaction, its
/// negation, so a shortfall against f_d drives the probe towards the surface.
class ArmInteractionController {
 public:
  ArmInteractionController(ArmKinematics kin, InteractionConfig config, const Vec5& q_init);

  struct Output {
    Vec5 u_q = Vec5::Zero();
    Vec5 u_f = Vec5::Zero();
    Vec6 pose_err = Vec6::Zero();
    Vec6 force_err = Vec6::Zero();
    double lambda_dot = 0.0;
  };

  const Output& update(const TaskReference& ref, const SpatialWrench& measured, ControlMode mode, double dt);

  const ControllerState& state() const { return state_; }
  const Output& last_output() const { return out_; }
  Pose reference_pose() const { return forward_kinematics(kin_, state_.q_ref); }
  const SubspaceSplit& split(ControlMode mode) const {
    return mode == ControlMode::Parallel ? parallel_split_ : motion_split_;
  }
  const ArmKinematics& kinematics() const { return kin_; }

 private:
  ArmKinematics kin_;
  InteractionConfig config_;
  SubspaceSplit motion_split_;
  SubspaceSplit parallel_split_;
  ImpedanceGains motion_gains_;
  ImpedanceGains parallel_gains_;
  ForceGains force_gains_;
  LowPassFilter lambda_filter_;
  ControllerState state_;
  Output out_;
};

}  // namespace uam
