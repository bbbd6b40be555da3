//! Structure of monotone coupling matrices: irreducibility, Perron vector,
//! constant solutions, the explicit ergodic constant and the gap decay rate.
//!
//! ```bash
//! cargo run --example coupling_analysis
//! ```

use hjsys::coupling::{analyze, constant_solution, delta_rate, matrix_from_rows, perron_vector};

fn main() -> hjsys::Result<()> {
    let cases = [
        ("symmetric", vec![vec![1.0, -1.0], vec![-1.0, 1.0]]),
        ("asymmetric", vec![vec![2.0, -2.0], vec![-1.0, 1.0]]),
        (
            "cyclic",
            vec![vec![1.0, -1.0, 0.0], vec![0.0, 1.0, -1.0], vec![-1.0, 0.0, 1.0]],
        ),
        (
            "two blocks",
            vec![
                vec![1.0, -1.0, 0.0, 0.0],
                vec![-1.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, -1.0],
                vec![0.0, 0.0, -1.0, 1.0],
            ],
        ),
    ];
    for (name, rows) in cases {
        let d = matrix_from_rows(&rows)?;
        let r = analyze(&d)?;
        println!("{name}: {}", serde_json::to_string(&r)?);
    }

    let d = matrix_from_rows(&[vec![2.0, -2.0], vec![-1.0, 1.0]])?;
    let lam = perron_vector(&d)?;
    println!("perron weights of [[2,-2],[-1,1]]: {:?}", lam.lambda);
    let (u, a) = constant_solution(&d, &[1.0, 0.0])?;
    println!("D u = b - a with b = (1, 0): u = {u:?}, a = {a}");
    println!("delta = {}", delta_rate(&d)?);
    Ok(())
}
