#ifndef DEFINETTI_TALBOT_Q_H
#define DEFINETTI_TALBOT_Q_H

/* Fixed-Talbot inversion of 1 / (psi(s + shift) - q) in quad precision for
   psi(th) = sigma^2/2 th^2 + c th + lam ((mu / (mu + th))^k - 1). */
void talbot_tilted_q(double sigma, double c, double lam, double mu, int k,
                     double shift, double q, const double *t, double *out,
                     long n, int nodes);

#endif
