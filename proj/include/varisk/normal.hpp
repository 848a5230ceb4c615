#pragma once

namespace varisk {

/// Standard normal CDF, computed through erfc so both tails keep full
/// relative precision.
double normal_cdf(double x);

double normal_pdf(double x);

/// Inverse of normal_cdf on (0, 1); throws std::domain_error otherwise.
double normal_quantile(double p);

} // namespace varisk
