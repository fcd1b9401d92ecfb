from sphere_waves.cli import main

main()
