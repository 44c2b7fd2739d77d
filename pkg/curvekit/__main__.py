from curvekit.main import main


main()
