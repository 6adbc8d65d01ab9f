//! How the geometric path moves mass between a Gaussian and a two-bump target.
//!
//! Prints `log c_λ` and the location of the path's mode for a few λ.

use temper_lab::distributions::{density_grid, Gaussian, GeometricPath, Mixture};

fn main() -> temper_lab::Result<()> {
    let target = Mixture::new(vec![
        (0.5, Gaussian::univariate(3.0, 0.25)?.into()),
        (0.5, Gaussian::univariate(8.0, 0.25)?.into()),
    ])?;
    let path = GeometricPath::new(Gaussian::standard(1)?, target)?;
    let grid: Vec<f64> = (0..=600).map(|i| -4.0 + 15.0 * i as f64 / 600.0).collect();
    let lambdas = [0.0, 0.1, 0.25, 0.5, 0.75, 1.0];
    let table = density_grid(&path, &lambdas, &grid)?;

    println!("{:>6} {:>10} {:>8}", "λ", "log c_λ", "mode");
    for (row, &l) in table.rows.iter().zip(&lambdas) {
        let (i, _) = row.density.iter().enumerate().fold((0, f64::MIN), |a, (i, &d)| if d > a.1 { (i, d) } else { a });
        println!("{l:>6.2} {:>10.4} {:>8.3}", path.log_partition(l)?, grid[i]);
    }
    Ok(())
}
