package main
var y = 2
var z = 3
