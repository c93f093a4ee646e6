fn a() {}
// doc
fn b() {}
fn c() { 1 }
