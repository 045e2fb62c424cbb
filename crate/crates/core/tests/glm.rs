mod common;

use medmi_core::datagen::{generate_complete, DgmParams};
use medmi_core::glm::{fit_logistic, log_likelihood, score, Matrix};
use medmi_core::{CellTable, ModelFormula, StreamSeed, Var};

// 20 rows: intercept, x1 (binary), x2 (continuous)
fn small() -> (Matrix, Vec<f64>) {
    let x1 = [0., 1., 0., 1., 1., 0., 0., 1., 1., 0., 1., 0., 1., 1., 0., 0., 1., 0., 1., 0.];
    let x2 = [0.3, -1.2, 0.8, 0.1, -0.4, 1.5, -0.7, 0.9, 2.1, -1.8, 0.0, 0.6, -0.2, 1.1, -0.9, 0.4, 1.7, -1.1, 0.2, 0.5];
    let y = [0., 0., 1., 1., 0., 1., 0., 1., 1., 0., 1., 0., 0., 1., 1., 0., 1., 0., 0., 1.];
    let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, x1[i], x2[i]]).collect();
    (Matrix::from_rows(&rows).unwrap(), y.to_vec())
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let p = b.len();
    for c in 0..p {
        let piv = (c..p).max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap()).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in 0..p {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in 0..p {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    (0..p).map(|i| b[i] / a[i][i]).collect()
}

// Plain Newton-Raphson with its own linear algebra.
fn newton(x: &Matrix, y: &[f64]) -> Vec<f64> {
    let p = x.cols();
    let mut beta = vec![0.0; p];
    for _ in 0..100 {
        let mut g = vec![0.0; p];
        let mut h = vec![vec![0.0; p]; p];
        for i in 0..x.rows() {
            let r = x.row(i);
            let mu = common::expit(r.iter().zip(&beta).map(|(a, b)| a * b).sum());
            for a in 0..p {
                g[a] += r[a] * (y[i] - mu);
                for b in 0..p {
                    h[a][b] += r[a] * r[b] * mu * (1.0 - mu);
                }
            }
        }
        let d = solve(h, g);
        beta.iter_mut().zip(&d).for_each(|(b, d)| *b += d);
        if d.iter().all(|d| d.abs() < 1e-13) {
            break;
        }
    }
    beta
}

#[test]
fn matches_independent_newton_on_small_data() {
    let (x, y) = small();
    let fit = fit_logistic(&x, &y, None).unwrap();
    assert!(fit.converged);
    let oracle = newton(&x, &y);
    for (a, b) in fit.coefficients.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-4, "{:?} vs {:?}", fit.coefficients, oracle);
    }
    let ll: f64 = (0..20)
        .map(|i| {
            let mu = common::expit(x.row(i).iter().zip(&oracle).map(|(a, b)| a * b).sum());
            y[i] * mu.ln() + (1.0 - y[i]) * (1.0 - mu).ln()
        })
        .sum();
    assert!((fit.log_likelihood - ll).abs() < 1e-8);
}

#[test]
fn saturated_binary_model_has_closed_form() {
    let (x, y) = small();
    let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, x.get(i, 1)]).collect();
    let fit = fit_logistic(&Matrix::from_rows(&rows).unwrap(), &y, None).unwrap();
    let rate = |g: f64| {
        let idx: Vec<usize> = (0..20).filter(|&i| x.get(i, 1) == g).collect();
        idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64
    };
    let logit = |p: f64| (p / (1.0 - p)).ln();
    assert!((fit.coefficients[0] - logit(rate(0.0))).abs() < 1e-9);
    assert!((fit.coefficients[1] - (logit(rate(1.0)) - logit(rate(0.0)))).abs() < 1e-9);
}

#[test]
fn intercept_only_grid_search() {
    let (_, y) = small();
    let x = Matrix::from_rows(&vec![vec![1.0]; 20]).unwrap();
    let fit = fit_logistic(&x, &y, None).unwrap();
    let w = vec![1.0; 20];
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in -4000..=4000 {
        let b = k as f64 * 1e-4;
        let ll = log_likelihood(&x, &y, &w, &[b]);
        if ll > best.0 {
            best = (ll, b);
        }
    }
    assert!((fit.coefficients[0] - best.1).abs() < 1e-4);
}

#[test]
fn score_matches_finite_differences() {
    let (x, y) = small();
    let w: Vec<f64> = (0..20).map(|i| 0.5 + (i % 3) as f64).collect();
    let beta = [0.2, -0.7, 0.4];
    let g = score(&x, &y, &w, &beta);
    let h = 1e-6;
    for j in 0..3 {
        let mut up = beta;
        let mut dn = beta;
        up[j] += h;
        dn[j] -= h;
        let fd = (log_likelihood(&x, &y, &w, &up) - log_likelihood(&x, &y, &w, &dn)) / (2.0 * h);
        assert!((fd - g[j]).abs() < 1e-6, "coordinate {j}: {fd} vs {}", g[j]);
    }
}

#[test]
fn covariance_inverts_numerical_hessian() {
    let (x, y) = small();
    let fit = fit_logistic(&x, &y, None).unwrap();
    let w = vec![1.0; 20];
    let h = 1e-4;
    let mut hess = vec![vec![0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let at = |da: f64, db: f64| {
                let mut c = fit.coefficients.clone();
                c[a] += da;
                c[b] += db;
                log_likelihood(&x, &y, &w, &c)
            };
            hess[a][b] = -(at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
        }
    }
    for j in 0..3 {
        let mut e = vec![0.0; 3];
        e[j] = 1.0;
        let col = solve(hess.clone(), e);
        for i in 0..3 {
            let c = fit.covariance.get(i, j);
            assert!((c - col[i]).abs() < 1e-4 * (1.0 + c.abs()), "({i},{j}) {c} vs {}", col[i]);
        }
    }
}

#[test]
fn weights_equal_replication() {
    let (x, y) = small();
    let w: Vec<f64> = (0..20).map(|i| 1.0 + (i % 2) as f64).collect();
    let weighted = fit_logistic(&x, &y, Some(&w)).unwrap();
    let mut rows = Vec::new();
    let mut yy = Vec::new();
    for i in 0..20 {
        for _ in 0..w[i] as usize {
            rows.push(x.row(i).to_vec());
            yy.push(y[i]);
        }
    }
    let replicated = fit_logistic(&Matrix::from_rows(&rows).unwrap(), &yy, None).unwrap();
    for (a, b) in weighted.coefficients.iter().zip(&replicated.coefficients) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn large_sample_recovers_generating_coefficients() {
    let params = DgmParams::default();
    let data = generate_complete(1_000_000, &params, &mut StreamSeed(77).stream(0)).unwrap();
    let table = CellTable::from_dataset(&data).unwrap();
    let model = params.model(Var::Y).unwrap();
    let terms = model.terms.iter().map(|c| c.term).collect();
    let f = ModelFormula::new(Var::Y, terms).unwrap();
    let fit = f.fit_table(&table).unwrap();
    let se = fit.standard_errors();
    let truth: Vec<f64> = std::iter::once(model.intercept).chain(model.terms.iter().map(|c| c.coef)).collect();
    for j in 0..truth.len() {
        let z = (fit.coefficients[j] - truth[j]) / se[j];
        assert!(z.abs() < 4.0, "coefficient {j}: {} vs {} (z = {z:.2})", fit.coefficients[j], truth[j]);
    }
}

#[test]
fn dataset_and_table_fits_agree() {
    let params = DgmParams::default();
    let data = generate_complete(3000, &params, &mut StreamSeed(5).stream(0)).unwrap();
    let f = ModelFormula::parse("Z ~ X + C1 + C2 + C3 + C1:C2 + C1:C3").unwrap();
    let a = f.fit_dataset(&data).unwrap();
    let b = f.fit_table(&CellTable::from_dataset(&data).unwrap()).unwrap();
    for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
        assert!((x - y).abs() < 1e-8);
    }
    assert!((a.log_likelihood - b.log_likelihood).abs() < 1e-6);
}
