#include <quadmath.h>
#include "_talbot_q.h"

static __complex128 inv_psi_q(__complex128 s, __float128 sigma, __float128 c,
                              __float128 lam, __float128 mu, int k,
                              __float128 shift, __float128 q)
{
    __complex128 th = s + shift;
    __complex128 v = 0.5Q * sigma * sigma * th * th + c * th - q;
    if (lam > 0) {
        __complex128 ratio = mu / (mu + th);
        __complex128 p = 1.0Q;
        for (int j = 0; j < k; j++)
            p *= ratio;
        v += lam * (p - 1.0Q);
    }
    return 1.0Q / v;
}

void talbot_tilted_q(double sigma, double c, double lam, double mu, int k,
                     double shift, double q, const double *t, double *out,
                     long n, int nodes)
{
    const __float128 pi = M_PIq;
    __float128 qs = sigma, qc = c, ql = lam, qm = mu, qsh = shift, qq = q;
    for (long i = 0; i < n; i++) {
        __float128 ti = t[i];
        if (!(ti > 0)) {
            out[i] = 0.0;
            continue;
        }
        __float128 r = 2.0Q * nodes / (5.0Q * ti);
        __complex128 f0 = inv_psi_q(r, qs, qc, ql, qm, k, qsh, qq);
        __float128 acc = 0.5Q * expq(r * ti) * crealq(f0);
        for (int j = 1; j < nodes; j++) {
            __float128 th = j * pi / nodes;
            __float128 cot = cosq(th) / sinq(th);
            __complex128 s = r * th * (cot + 1.0Qi);
            __float128 sig = th + (th * cot - 1.0Q) * cot;
            __complex128 term = cexpq(ti * s) * inv_psi_q(s, qs, qc, ql, qm, k, qsh, qq)
                                * (1.0Q + sig * 1.0Qi);
            acc += crealq(term);
        }
        out[i] = (double)(r / nodes * acc);
    }
}
