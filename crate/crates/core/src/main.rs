fn main() {
    println!("runshape");
}
