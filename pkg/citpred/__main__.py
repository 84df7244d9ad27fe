from citpred.main import main

main()
