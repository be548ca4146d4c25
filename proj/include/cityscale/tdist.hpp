#pragma once

namespace cityscale {

// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1],
// evaluated by the modified Lentz continued fraction.
double incomplete_beta(double a, double b, double x);

// P(|T| >= |t|) for Student's t with `dof` degrees of freedom.
double student_t_two_sided_p(double t, double dof);

}  // namespace cityscale
