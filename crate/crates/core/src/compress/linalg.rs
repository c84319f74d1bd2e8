//! Small dense SPD routines in f64 for the second-order solvers.

/// Lower Cholesky factor `L` with `a = L·Lᵀ`, row-major `n × n`.
pub fn cholesky_lower(a: &[f64], n: usize) -> Result<Vec<f64>, String> {
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(format!("matrix not positive definite at pivot {i} ({s:e})"));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Inverse of an SPD matrix via its Cholesky factor.
pub fn spd_inverse(a: &[f64], n: usize) -> Result<Vec<f64>, String> {
    let l = cholesky_lower(a, n)?;
    // Linv: lower triangular inverse of L.
    let mut linv = vec![0.0f64; n * n];
    for i in 0..n {
        linv[i * n + i] = 1.0 / l[i * n + i];
        for j in 0..i {
            let mut s = 0.0;
            for k in j..i {
                s -= l[i * n + k] * linv[k * n + j];
            }
            linv[i * n + j] = s / l[i * n + i];
        }
    }
    // a⁻¹ = Linvᵀ · Linv
    let mut inv = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = 0.0;
            for k in i.max(j)..n {
                s += linv[k * n + i] * linv[k * n + j];
            }
            inv[i * n + j] = s;
            inv[j * n + i] = s;
        }
    }
    Ok(inv)
}

/// Upper factor `U` of `H⁻¹ = Uᵀ·U`. Row `j` of `U`, scaled by `1/U_jj`,
/// is the compensation direction after fixing column `j` given that all
/// earlier columns are already fixed.
pub fn inverse_upper_cholesky(h: &[f64], n: usize) -> Result<Vec<f32>, String> {
    let inv = spd_inverse(h, n)?;
    let l = cholesky_lower(&inv, n)?;
    let mut u = vec![0.0f32; n * n];
    for i in 0..n {
        for j in i..n {
            u[i * n + j] = l[j * n + i] as f32;
        }
    }
    Ok(u)
}
