fn main() {
    println!("imbaclass");
}
