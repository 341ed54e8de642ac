use meshpool::training::Contingency;

pub fn ln_fact(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// Every contingency table with the given margins, filled row by row.
pub fn tables(rows: &[usize], cols: &[usize]) -> Vec<Vec<Vec<usize>>> {
    fn fill(
        r: usize,
        c: usize,
        rows: &[usize],
        col_left: &mut Vec<usize>,
        row_left: usize,
        cur: &mut Vec<Vec<usize>>,
        out: &mut Vec<Vec<Vec<usize>>>,
    ) {
        if r == rows.len() {
            if col_left.iter().all(|&x| x == 0) {
                out.push(cur.clone());
            }
            return;
        }
        if c + 1 == col_left.len() {
            if row_left > col_left[c] {
                return;
            }
            cur[r][c] = row_left;
            col_left[c] -= row_left;
            let next = if r + 1 < rows.len() { rows[r + 1] } else { 0 };
            fill(r + 1, 0, rows, col_left, next, cur, out);
            col_left[c] += row_left;
            cur[r][c] = 0;
            return;
        }
        for k in 0..=row_left.min(col_left[c]) {
            cur[r][c] = k;
            col_left[c] -= k;
            fill(r, c + 1, rows, col_left, row_left - k, cur, out);
            col_left[c] += k;
        }
        cur[r][c] = 0;
    }
    let mut out = Vec::new();
    let mut cur = vec![vec![0; cols.len()]; rows.len()];
    let mut col_left = cols.to_vec();
    fill(0, 0, rows, &mut col_left, rows[0], &mut cur, &mut out);
    out
}

pub fn table_mi(t: &[Vec<usize>], rows: &[usize], cols: &[usize], n: usize) -> f64 {
    let n = n as f64;
    let mut mi = 0.0;
    for i in 0..rows.len() {
        for j in 0..cols.len() {
            if t[i][j] > 0 {
                let x = t[i][j] as f64;
                mi += x / n * (x * n / (rows[i] * cols[j]) as f64).ln();
            }
        }
    }
    mi
}

pub fn brute_force_emi(rows: &[usize], cols: &[usize]) -> f64 {
    let n: usize = rows.iter().sum();
    let margins: f64 = rows.iter().chain(cols).map(|&x| ln_fact(x)).sum::<f64>() - ln_fact(n);
    let mut emi = 0.0;
    let mut total_p = 0.0;
    for t in tables(rows, cols) {
        let cells: f64 = t.iter().flatten().map(|&x| ln_fact(x)).sum();
        let p = (margins - cells).exp();
        total_p += p;
        emi += p * table_mi(&t, rows, cols, n);
    }
    assert!((total_p - 1.0).abs() < 1e-12, "table probabilities sum to {total_p}");
    emi
}

pub fn oracle_ami(a: &[usize], b: &[usize]) -> f64 {
    let t = Contingency::new(a, b).unwrap();
    if t.is_bijective() {
        return 1.0;
    }
    let h = |sizes: &[usize]| -> f64 {
        let n = a.len() as f64;
        sizes.iter().map(|&s| -(s as f64 / n) * (s as f64 / n).ln()).sum()
    };
    let mi = table_mi(&t.counts, &t.rows, &t.cols, t.n);
    let emi = brute_force_emi(&t.rows, &t.cols);
    let denom = 0.5 * (h(&t.rows) + h(&t.cols)) - emi;
    if denom.abs() < 1e-15 {
        return 0.0;
    }
    (mi - emi) / denom
}
