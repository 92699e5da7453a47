//! Multi-indices in graded-lex order: total degree ascending, then
//! exponent tuples in descending lexicographic order, so for m = 2 the
//! degree-2 block reads (2,0), (1,1), (0,2).

pub type MultiIndex = Vec<usize>;

pub fn graded_lex(m: usize, max_degree: usize) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    for d in 0..=max_degree {
        of_degree(m, d, &mut out);
    }
    out
}

pub fn of_degree(m: usize, d: usize, out: &mut Vec<MultiIndex>) {
    fn rec(m: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
        if cur.len() + 1 == m {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in (0..=left).rev() {
            cur.push(k);
            rec(m, left - k, cur, out);
            cur.pop();
        }
    }
    if m == 0 {
        if d == 0 {
            out.push(Vec::new());
        }
        return;
    }
    rec(m, d, &mut Vec::with_capacity(m), out);
}

pub fn degree(beta: &[usize]) -> usize {
    beta.iter().sum()
}

pub fn factorial(beta: &[usize]) -> f64 {
    beta.iter().map(|&b| (1..=b).map(|k| k as f64).product::<f64>()).product()
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r = 1usize;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// Number of multi-indices in m variables with degree at most l.
pub fn count(m: usize, l: usize) -> usize {
    binomial(m + l, l)
}

/// x^beta
pub fn monomial(x: &[f64], beta: &[usize]) -> f64 {
    x.iter().zip(beta).map(|(xi, &b)| xi.powi(b as i32)).product()
}

/// Position of `beta` inside `graded_lex(m, _)`.
pub fn position(beta: &[usize]) -> usize {
    let m = beta.len();
    let d = degree(beta);
    let mut pos = if d == 0 { 0 } else { count(m, d - 1) };
    // inside the degree block: count tuples that come before beta
    let mut left = d;
    for i in 0..m.saturating_sub(1) {
        let rest = m - i - 1;
        for k in (beta[i] + 1)..=left {
            pos += binomial(left - k + rest - 1, rest - 1);
        }
        left -= beta[i];
    }
    pos
}

/// Coefficients of D^alpha applied to x^beta: returns (gamma, factor) with
/// D^alpha x^beta = factor * x^gamma, or None when it vanishes.
pub fn differentiate(beta: &[usize], alpha: &[usize]) -> Option<(MultiIndex, f64)> {
    let mut gamma = Vec::with_capacity(beta.len());
    let mut factor = 1.0;
    for (&b, &a) in beta.iter().zip(alpha) {
        if a > b {
            return None;
        }
        for k in 0..a {
            factor *= (b - k) as f64;
        }
        gamma.push(b - a);
    }
    Some((gamma, factor))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_and_positions_agree() {
        for m in 1..=3 {
            let all = graded_lex(m, 5);
            assert_eq!(all.len(), count(m, 5));
            for (i, b) in all.iter().enumerate() {
                assert_eq!(position(b), i, "{b:?}");
            }
        }
        assert_eq!(graded_lex(2, 2), vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]);
    }

    #[test]
    fn derivative_of_monomial() {
        assert_eq!(differentiate(&[3, 1], &[2, 0]), Some((vec![1, 1], 6.0)));
        assert_eq!(differentiate(&[1, 1], &[2, 0]), None);
    }
}
